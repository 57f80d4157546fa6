"""Tests for MPS export/import and the external-solver bridge."""

import sys
from pathlib import Path

import numpy as np
import pytest

from toposhift.config import SolverSettings
from toposhift.errors import ModelError, SolverBridgeError
from toposhift.formulations import build_ott
from toposhift.grid import GridCase
from toposhift.milp import MilpModel, Sense, SolveStatus, VarKind, solve_bb
from toposhift.mps import column_name, export_mps, read_mps, run_external_solver

from conftest import CRITICAL_PG, CRITICAL_Z0, CRITICAL_ZT


def small_model() -> MilpModel:
    model = MilpModel("small")
    x = model.add_var("x", VarKind.BINARY)
    y = model.add_var("y", lb=-np.inf, ub=4.0)
    z = model.add_var("z", VarKind.BINARY)
    model.fix(z, 1.0)
    model.add_constraint([(y, 1.0), (x, -3.0)], Sense.LE, 1.0)
    model.add_constraint([(y, 1.0)], Sense.GE, -2.0)
    model.add_constraint([(x, 1.0), (z, 1.0)], Sense.EQ, 2.0)
    model.add_objective([x, y], [0.5, -1.0])
    model.add_quadratic_objective(y, y, 0.25)
    model.offset = 2.0
    return model.seal()


STUB_SOLVER = """
import sys
with open(sys.argv[2], "w") as f:
    f.write("C0000000 1\\nC0000001 4\\nC0000002 1\\n")
"""


class TestExportMps:
    """Tests for fixed-format MPS writing."""

    def test_sections_in_order(self, tmp_path: Path):
        text = export_mps(small_model(), tmp_path / "m.mps").read_text(encoding="ascii")
        positions = [text.index(s) for s in ("NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA")]
        assert positions == sorted(positions)
        assert "'INTORG'" in text and "'INTEND'" in text
        assert "QUADOBJ" not in text

    def test_bounds(self, tmp_path: Path):
        text = export_mps(small_model(), tmp_path / "m.mps").read_text(encoding="ascii")
        assert f" BV BND       {column_name(0)}" in text
        assert f" MI BND       {column_name(1)}" in text
        assert f" UP BND       {column_name(1)}  4" in text
        assert f" FX BND       {column_name(2)}  1" in text

    def test_quadratic_section(self, tmp_path: Path):
        text = export_mps(small_model(), tmp_path / "m.mps", quadratic=True).read_text(encoding="ascii")
        assert "QUADOBJ" in text
        assert f"{column_name(1)}  {column_name(1)}  0.5" in text

    def test_unsealed_model(self, tmp_path: Path):
        model = MilpModel()
        model.add_var("x")
        with pytest.raises(ModelError):
            export_mps(model, tmp_path / "m.mps")

    def test_reimported_model_has_same_optimum(self, tmp_path: Path, critical: GridCase, ott_config):
        model = build_ott(critical, CRITICAL_Z0, CRITICAL_ZT, CRITICAL_PG, ott_config)
        path = export_mps(model, tmp_path / "ott.mps")
        reread = read_mps(path)
        assert reread.n_vars == model.n_vars
        assert reread.n_constraints == model.n_constraints
        original = solve_bb(model)
        again = solve_bb(reread)
        assert again.objective == pytest.approx(original.objective, rel=1e-6)

    def test_read_rejects_unknown_section(self, tmp_path: Path):
        path = tmp_path / "bad.mps"
        path.write_text("NAME x\nROWS\n N  OBJ\nRANGES\n RNG R1 1\nENDATA\n", encoding="ascii")
        with pytest.raises(ModelError, match="unsupported section"):
            read_mps(path)


class TestExternalSolver:
    """Tests for the external command bridge."""

    def test_solution_file(self, tmp_path: Path):
        script = tmp_path / "stub.py"
        script.write_text(STUB_SOLVER, encoding="utf-8")
        outcome = run_external_solver(small_model(), [sys.executable, str(script), "{mps}", "{solution}"])
        assert outcome.status is SolveStatus.OPTIMAL
        assert outcome.assignment.tolist() == [1.0, 4.0, 1.0]
        assert outcome.objective == pytest.approx(0.5 - 4.0 + 2.0)

    def test_solution_on_stdout(self, tmp_path: Path):
        script = tmp_path / "stdout.py"
        script.write_text('print("C0000000 1")\nprint("C0000001 -2")\nprint("C0000002 1")\n', encoding="utf-8")
        outcome = run_external_solver(small_model(), [sys.executable, str(script), "{mps}"])
        assert outcome.assignment.tolist() == [1.0, -2.0, 1.0]

    def test_empty_output_is_infeasible(self, tmp_path: Path):
        script = tmp_path / "silent.py"
        script.write_text("", encoding="utf-8")
        outcome = run_external_solver(small_model(), [sys.executable, str(script)])
        assert outcome.status is SolveStatus.INFEASIBLE
        assert not outcome.has_solution

    def test_failing_command(self, tmp_path: Path):
        script = tmp_path / "fail.py"
        script.write_text("import sys\nsys.exit(3)\n", encoding="utf-8")
        with pytest.raises(SolverBridgeError, match="exited with 3"):
            run_external_solver(small_model(), [sys.executable, str(script)])

    def test_missing_executable(self, tmp_path: Path):
        with pytest.raises(SolverBridgeError, match="failed to run"):
            run_external_solver(small_model(), [str(tmp_path / "no-such-solver")])

    def test_violating_solution(self, tmp_path: Path):
        script = tmp_path / "bad.py"
        script.write_text('print("C0000000 0")\nprint("C0000001 4")\n', encoding="utf-8")
        with pytest.raises(SolverBridgeError, match="violates"):
            run_external_solver(small_model(), [sys.executable, str(script)], SolverSettings())
