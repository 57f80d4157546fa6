"""Tests for JSON and CSV encodings."""

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from conftest import FIVE_PG, FIVE_Z0, FIVE_ZT
from toposhift.errors import CaseError
from toposhift.grid import GridCase
from toposhift.mcheck import BatchRho, RhoMode, RhoResult
from toposhift.reports import (
    read_trajectory,
    read_vector,
    rounded,
    sig9,
    topology_document,
    trajectory_document,
    write_json,
    write_metric_csv,
    write_rho_csv,
)
from toposhift.trajectories import adhoc_syn, validate_trajectory


class TestRounding:
    def test_sig9(self):
        assert sig9(1.0 / 3.0) == 0.333333333
        assert sig9(123456789.123) == 123456789.0
        assert sig9(math.inf) is None
        assert sig9(math.nan) is None

    def test_rounded_nested(self):
        payload = {"a": [np.float64(2.0 / 3.0), np.int64(4)], "b": np.array([True, False]), "c": "x"}
        assert rounded(payload) == {"a": [0.666666667, 4], "b": [True, False], "c": "x"}

    def test_bool_stays_bool(self):
        assert rounded(np.bool_(True)) is True


class TestDocuments:
    def test_topology_document(self):
        doc = topology_document(np.array([1, 0]), [0.5, 1.5], cost=2.0, status="optimal")
        assert doc == {"topology": [1, 0], "p_g": [0.5, 1.5], "dispatch_cost": 2.0, "status": "optimal"}

    def test_trajectory_document_with_metrics(self, five_bus: GridCase):
        traj = adhoc_syn(FIVE_Z0, FIVE_ZT)
        report = validate_trajectory(five_bus, traj, FIVE_PG)
        doc = trajectory_document(traj, report=report)
        assert doc["T"] == 2
        assert doc["batches"] == [[4, 5], [1, 3]]
        assert doc["metrics"]["feasible"] is True
        assert "decision" not in doc

    def test_write_json_to_file(self, tmp_path: Path):
        path = tmp_path / "out.json"
        write_json({"x": 1.0 / 7.0}, path)
        assert json.loads(path.read_text(encoding="utf-8")) == {"x": 0.142857143}

    def test_write_json_to_stdout(self, capsys):
        write_json({"inf": math.inf})
        assert json.loads(capsys.readouterr().out) == {"inf": None}


class TestReaders:
    def test_bare_list(self, json_file):
        assert read_vector(json_file("v.json", [1, 0, 1]), "topology").tolist() == [1.0, 0.0, 1.0]

    def test_keyed_entry(self, json_file):
        path = json_file("v.json", {"p_g": [2.0, 0.0], "topology": [1]})
        assert read_vector(path, "p_g").tolist() == [2.0, 0.0]

    def test_missing_key(self, json_file):
        with pytest.raises(CaseError, match="no 'p_g' entry"):
            read_vector(json_file("v.json", {"topology": [1]}), "p_g")

    def test_not_a_list(self, json_file):
        with pytest.raises(CaseError, match="must be a list"):
            read_vector(json_file("v.json", {"p_g": 3}), "p_g")

    def test_invalid_json(self, tmp_path: Path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(CaseError, match="not valid JSON"):
            read_vector(path, "p_g")

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(OSError):
            read_vector(tmp_path / "absent.json", "p_g")

    def test_trajectory_forms(self, json_file):
        bare = read_trajectory(json_file("a.json", [FIVE_Z0, FIVE_ZT]))
        keyed = read_trajectory(json_file("b.json", {"topologies": [FIVE_Z0, FIVE_ZT], "T": 1}))
        assert bare == keyed

    def test_bad_trajectory(self, json_file):
        with pytest.raises(CaseError, match="not a trajectory document"):
            read_trajectory(json_file("c.json", {"topologies": [[1, 0], [1]]}))


class TestCsv:
    def test_rho_rows(self, tmp_path: Path):
        result = RhoResult(
            rho=0.25,
            numerator=1.0,
            denominator=4,
            no_intermediates=False,
            standard_error=None,
            mode=RhoMode.EXHAUSTIVE,
            rows=[BatchRho("s1", 1, 3, 1.0, 3), BatchRho("s1", 2, 0, 0.0, 0), BatchRho("s2", 1, 1, 0.0, 1)],
        )
        path = tmp_path / "rho.csv"
        write_rho_csv(result, path)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["scenario", "t", "variants", "violations", "rho"]
        assert frame["rho"].tolist() == pytest.approx([0.333333333, 0.0, 0.0])
        assert frame["scenario"].tolist() == ["s1", "s1", "s2"]

    def test_metric_rows(self, tmp_path: Path, five_bus: GridCase):
        report = validate_trajectory(five_bus, adhoc_syn(FIVE_Z0, FIVE_ZT), FIVE_PG)
        path = tmp_path / "metrics.csv"
        write_metric_csv([("syn", report)], path)
        frame = pd.read_csv(path)
        assert frame.loc[0, "label"] == "syn"
        assert bool(frame.loc[0, "feasible"])
        assert frame.loc[0, "H_c"] == 4.0
        assert "details" not in frame.columns
