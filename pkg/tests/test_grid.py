"""Tests for case data, topology algebra and the connectivity oracle."""

import copy
from pathlib import Path

import numpy as np
import pytest

from conftest import FIVE_BUS, FIVE_Z0, FIVE_ZT, FOUR_Z0, FOUR_ZT, TRIANGLE
from toposhift.errors import CaseError, EnumerationTooLargeError
from toposhift.grid import (
    GridCase,
    as_topology,
    changed_agents,
    incidence_matrix,
    intermediate_variants,
    intersection_topology,
    is_connected,
    load_case,
    uniquely_balanced_vector,
)


class TestLoadCase:
    """Tests for reading and validating case files."""

    def test_loads_valid_case(self, case_file):
        case = load_case(case_file(FIVE_BUS))
        assert case.n_buses == 5
        assert case.n_branches == 6
        assert case.ref == 0

    def test_invalid_json(self, tmp_path: Path):
        path = tmp_path / "case.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(CaseError, match="not valid JSON"):
            load_case(path)

    def test_missing_file_raises_os_error(self, tmp_path: Path):
        with pytest.raises(OSError):
            load_case(tmp_path / "missing.json")

    def test_relaxed_limit_below_normal(self, case_file):
        doc = copy.deepcopy(TRIANGLE)
        doc["branches"][0]["p_max_relaxed"] = 1.0
        with pytest.raises(CaseError, match="p_max_relaxed"):
            load_case(case_file(doc))

    def test_self_loop(self, case_file):
        doc = copy.deepcopy(TRIANGLE)
        doc["branches"][0]["to"] = 1
        with pytest.raises(CaseError, match="itself"):
            load_case(case_file(doc))

    def test_unknown_reference_bus(self, case_file):
        doc = copy.deepcopy(TRIANGLE)
        doc["reference_bus"] = 9
        with pytest.raises(CaseError, match="reference bus"):
            load_case(case_file(doc))

    def test_overlapping_agents(self, case_file):
        doc = copy.deepcopy(FIVE_BUS)
        doc["agents"] = [[1, 4], [1, 2, 3, 5]]
        with pytest.raises(CaseError, match="overlap"):
            load_case(case_file(doc))

    def test_agents_must_cover_switchable(self, case_file):
        doc = copy.deepcopy(FIVE_BUS)
        doc["agents"] = [[1, 4], [2, 3]]
        with pytest.raises(CaseError, match="cover"):
            load_case(case_file(doc))


class TestGridCase:
    """Tests for derived arrays."""

    def test_initial_topology_follows_in_service(self, five_bus: GridCase):
        assert five_bus.initial_topology().tolist() == FIVE_Z0

    def test_agent_masks(self, five_bus: GridCase):
        masks = five_bus.agent_masks
        assert np.flatnonzero(masks[0]).tolist() == [1, 4]
        assert np.flatnonzero(masks[1]).tolist() == [2, 3, 5]

    def test_diameter(self, five_bus: GridCase, triangle: GridCase):
        assert triangle.diameter == 1
        assert five_bus.diameter == 2

    def test_scaled_multiplies_loads(self, five_bus: GridCase):
        scaled = five_bus.scaled(1.5)
        assert scaled.p_d.tolist() == [0.0, 0.0, 1.5, 0.0, 1.5]
        assert five_bus.p_d.tolist() == [0.0, 0.0, 1.0, 0.0, 1.0]

    def test_incidence_matrix_columns_sum_to_zero(self, five_bus: GridCase):
        E = incidence_matrix(five_bus)
        assert E.shape == (5, 6)
        assert np.all(E.sum(axis=0) == 0)
        assert E[0, 0] == 1 and E[1, 0] == -1


class TestTopologyAlgebra:
    """Tests for topology vectors and their operations."""

    def test_as_topology_rejects_wrong_length(self, five_bus: GridCase):
        with pytest.raises(CaseError, match="length"):
            as_topology(five_bus, [1, 1, 1])

    def test_as_topology_rejects_non_binary(self, five_bus: GridCase):
        with pytest.raises(CaseError, match="0 or 1"):
            as_topology(five_bus, [1, 2, 1, 1, 0, 0])

    def test_as_topology_rejects_open_fixed_branch(self, five_bus: GridCase):
        with pytest.raises(CaseError, match="unswitchable"):
            as_topology(five_bus, [0, 1, 1, 1, 0, 0])

    def test_is_connected(self, five_bus: GridCase):
        assert is_connected(five_bus, FIVE_Z0)
        assert is_connected(five_bus, FIVE_ZT)
        assert not is_connected(five_bus, intersection_topology(FIVE_Z0, FIVE_ZT))

    def test_single_bus_is_connected(self):
        case = GridCase.model_validate({"buses": [{"id": 1}], "branches": [], "reference_bus": 1})
        assert is_connected(case, np.zeros(0, dtype=int))

    def test_intersection_topology(self):
        assert intersection_topology(FIVE_Z0, FIVE_ZT).tolist() == [1, 0, 1, 0, 0, 0]

    def test_intersection_length_mismatch(self):
        with pytest.raises(CaseError):
            intersection_topology([1, 0], [1, 0, 1])

    def test_changed_agents(self, five_bus: GridCase):
        assert changed_agents(five_bus, FIVE_Z0, FIVE_ZT) == [0, 1]
        assert changed_agents(five_bus, FIVE_Z0, [1, 1, 1, 1, 1, 0]) == [0]
        assert changed_agents(five_bus, FIVE_Z0, FIVE_Z0) == []

    def test_uniquely_balanced_vector(self, five_bus: GridCase):
        c = uniquely_balanced_vector(five_bus)
        assert c.sum() == 0
        assert c[five_bus.ref] == 4
        assert np.all(np.delete(c, five_bus.ref) == -1)


class TestIntermediateVariants:
    """Tests for proper-subset enumeration of a switching batch."""

    def test_counts_proper_subsets_including_empty(self):
        variants = intermediate_variants(FOUR_Z0, FOUR_ZT)
        assert len(variants) == 3
        assert variants[0].tolist() == [0, 0, 0, 0]
        assert [v.tolist() for v in variants[1:]] == [[0, 0, -1, 0], [0, 0, 0, 1]]

    def test_full_batch_excluded(self):
        full = np.array(FOUR_ZT) - np.array(FOUR_Z0)
        assert not any(np.array_equal(v, full) for v in intermediate_variants(FOUR_Z0, FOUR_ZT))

    def test_no_change_has_no_variants(self):
        assert intermediate_variants(FOUR_Z0, FOUR_Z0) == []

    @pytest.mark.parametrize("k", [1, 3, 4])
    def test_size(self, k: int):
        z_prev = np.zeros(6, dtype=int)
        z_next = np.zeros(6, dtype=int)
        z_next[:k] = 1
        assert len(intermediate_variants(z_prev, z_next)) == 2**k - 1

    def test_cap(self):
        with pytest.raises(EnumerationTooLargeError, match="cap 3"):
            intermediate_variants(np.zeros(4, dtype=int), np.ones(4, dtype=int), cap=3)
