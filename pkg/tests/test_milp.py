"""Tests for the MILP model, LP relaxation, branch-and-bound and brute force."""

import numpy as np
import pytest

from toposhift.config import SolverSettings
from toposhift.errors import ModelError, TooManyBinariesError, WarmStartError
from toposhift.milp import (
    MilpModel,
    Sense,
    SolveStatus,
    VarKind,
    brute_force_binary,
    complete_assignment,
    solve_bb,
    solve_lp,
)


LARGE_KNAPSACK = ([10, 13, 7, 8, 9, 4, 6, 11], [3, 4, 2, 3, 3, 1, 2, 5], 11.5)


def knapsack(values, weights, capacity) -> MilpModel:
    """Maximize value (as a minimization) under one capacity row."""
    model = MilpModel("knapsack")
    x = model.add_vars("x", len(values), VarKind.BINARY, tag="x")
    model.add_constraint(list(zip(x, weights)), Sense.LE, capacity, "capacity")
    model.add_objective(x, -np.asarray(values, dtype=float))
    return model.seal()


def random_milp(seed: int) -> MilpModel:
    """Bounded random MILP with a known feasible point."""
    rng = np.random.default_rng(seed)
    n_bin = 6 + seed % 5
    n_cont = 2
    model = MilpModel(f"random{seed}")
    x = model.add_vars("x", n_bin, VarKind.BINARY, tag="x")
    y = model.add_vars("y", n_cont, lb=0.0, ub=5.0, tag="y")
    point = np.concatenate([rng.integers(0, 2, n_bin), rng.uniform(0, 5, n_cont)])
    for r in range(3 + seed % 3):
        coefs = rng.integers(-5, 6, n_bin + n_cont).astype(float)
        rhs = float(coefs @ point + rng.uniform(0, 3))
        model.add_constraint(list(zip(np.concatenate([x, y]), coefs)), Sense.LE, rhs, f"r{r}")
    model.add_objective(x, rng.integers(-10, 11, n_bin).astype(float))
    model.add_objective(y, rng.uniform(-3, 3, n_cont))
    model.offset = float(rng.uniform(-1, 1))
    return model.seal()


class TestMilpModel:
    """Tests for model construction and inspection."""

    def test_add_vars_and_tags(self):
        model = MilpModel()
        idx = model.add_vars("z", 3, VarKind.BINARY, tag="z")
        assert idx.tolist() == [0, 1, 2]
        assert model.group("z").tolist() == [0, 1, 2]
        assert model.names == ["z[0]", "z[1]", "z[2]"]
        assert model.has_group("z") and not model.has_group("w")

    def test_binary_bounds_clipped(self):
        model = MilpModel()
        i = model.add_var("b", VarKind.BINARY, lb=-3.0, ub=7.0)
        assert model.bounds == ([0.0], [1.0])
        assert i == 0

    def test_inverted_bounds(self):
        with pytest.raises(ModelError, match="lower bound"):
            MilpModel().add_var("x", lb=2.0, ub=1.0)

    def test_undeclared_variable(self):
        model = MilpModel()
        model.add_var("x")
        with pytest.raises(ModelError, match="undeclared"):
            model.add_constraint([(3, 1.0)], Sense.LE, 1.0)

    def test_unknown_group(self):
        with pytest.raises(ModelError, match="no variable group"):
            MilpModel("m").group("z")

    def test_sealed_model_is_read_only(self):
        model = MilpModel().seal()
        with pytest.raises(ModelError, match="sealed"):
            model.add_var("x")

    def test_solve_requires_seal(self):
        model = MilpModel()
        model.add_var("x")
        with pytest.raises(ModelError, match="sealed before"):
            solve_lp(model)

    def test_objective_accumulates(self):
        model = MilpModel()
        x = model.add_var("x")
        model.add_objective(x, 2.0)
        model.add_objective(x, 0.5)
        assert model.objective_terms == {0: 2.5}

    def test_max_violation(self):
        model = MilpModel()
        x = model.add_vars("x", 2, VarKind.BINARY)
        model.add_constraint([(x[0], 1.0), (x[1], 1.0)], Sense.LE, 1.0)
        model.seal()
        assert model.max_violation(np.array([1.0, 0.0])) == 0.0
        assert model.max_violation(np.array([1.0, 1.0])) == pytest.approx(1.0)
        assert model.max_violation(np.array([0.4, 0.0])) == pytest.approx(0.4)

    def test_free_binaries_exclude_fixed(self):
        model = MilpModel()
        x = model.add_vars("x", 3, VarKind.BINARY)
        model.fix(x[1], 1.0)
        model.seal()
        assert model.free_binaries().tolist() == [0, 2]

    def test_objective_value_includes_offset(self):
        model = MilpModel()
        x = model.add_var("x")
        model.add_objective(x, 3.0)
        model.offset = 1.5
        model.seal()
        assert model.objective_value(np.array([2.0])) == pytest.approx(7.5)


class TestSolveLp:
    def test_relaxation_is_fractional(self):
        model = knapsack([3, 2, 2], [2, 1, 1], 2.5)
        outcome = solve_lp(model)
        assert outcome.status is SolveStatus.OPTIMAL
        assert outcome.objective < -4.0

    def test_infeasible(self):
        model = MilpModel()
        x = model.add_var("x", ub=1.0)
        model.add_constraint([(x, 1.0)], Sense.GE, 2.0)
        outcome = solve_lp(model.seal())
        assert outcome.status is SolveStatus.INFEASIBLE
        assert not outcome.has_solution

    def test_unbounded(self):
        model = MilpModel()
        x = model.add_var("x")
        model.add_objective(x, -1.0)
        assert solve_lp(model.seal()).status is SolveStatus.UNBOUNDED

    def test_complete_assignment(self):
        model = MilpModel()
        x = model.add_var("x", VarKind.BINARY)
        y = model.add_var("y", ub=10.0)
        model.add_constraint([(y, 1.0), (x, -4.0)], Sense.LE, 1.0)
        model.add_objective(y, -1.0)
        model.seal()
        assert complete_assignment(model, {x: 1.0}) == pytest.approx([1.0, 5.0])
        assert complete_assignment(model, {x: 2.0}) is None


class TestSolveBb:
    """Tests for branch-and-bound."""

    def test_knapsack(self):
        model = knapsack([10, 13, 7, 8], [3, 4, 2, 3], 7)
        outcome = solve_bb(model)
        assert outcome.status is SolveStatus.OPTIMAL
        assert outcome.objective == pytest.approx(-23.0)
        assert np.round(outcome.assignment[model.group("x")]).tolist() == [1, 1, 0, 0]
        assert outcome.gap == pytest.approx(0.0, abs=1e-6)

    def test_infeasible(self):
        model = MilpModel()
        x = model.add_vars("x", 2, VarKind.BINARY)
        model.add_constraint([(x[0], 1.0), (x[1], 1.0)], Sense.EQ, 1.5)
        outcome = solve_bb(model.seal())
        assert outcome.status is SolveStatus.INFEASIBLE

    def test_integer_infeasible_but_lp_feasible(self):
        model = MilpModel()
        x = model.add_vars("x", 3, VarKind.BINARY)
        model.add_constraint([(i, 2.0) for i in x], Sense.EQ, 3.0)
        outcome = solve_bb(model.seal())
        assert outcome.status is SolveStatus.INFEASIBLE
        assert outcome.nodes > 1

    def test_unbounded(self):
        model = MilpModel()
        x = model.add_var("x", VarKind.BINARY)
        y = model.add_var("y", lb=-np.inf)
        model.add_objective([x, y], [1.0, 1.0])
        assert solve_bb(model.seal()).status is SolveStatus.UNBOUNDED

    def test_node_limit(self):
        model = knapsack(*LARGE_KNAPSACK)
        outcome = solve_bb(model, settings=SolverSettings(node_limit=1))
        assert outcome.status is SolveStatus.NODE_LIMIT

    def test_warm_start_kept_when_optimal(self):
        model = knapsack([10, 13, 7, 8], [3, 4, 2, 3], 7)
        warm = np.array([1.0, 1.0, 0.0, 0.0])
        outcome = solve_bb(model, warm_start=warm)
        assert outcome.objective == pytest.approx(-23.0)

    def test_invalid_warm_start(self):
        model = knapsack([10, 13, 7, 8], [3, 4, 2, 3], 7)
        with pytest.raises(WarmStartError, match="violates"):
            solve_bb(model, warm_start=np.ones(4))

    def test_deterministic(self):
        a = solve_bb(random_milp(11))
        b = solve_bb(random_milp(11))
        assert a.nodes == b.nodes
        assert np.array_equal(a.assignment, b.assignment)

    def test_parallel_workers_agree(self):
        serial = solve_bb(knapsack(*LARGE_KNAPSACK))
        parallel = solve_bb(knapsack(*LARGE_KNAPSACK), settings=SolverSettings(workers=3))
        assert parallel.objective == pytest.approx(serial.objective, abs=1e-6)

    def test_loose_gap(self):
        model = knapsack(*LARGE_KNAPSACK)
        exact = brute_force_binary(model)
        outcome = solve_bb(model, gap=0.5)
        assert outcome.status in (SolveStatus.OPTIMAL, SolveStatus.GAP_LIMIT)
        assert outcome.objective >= exact.objective - 1e-6
        assert outcome.bound <= exact.objective + 1e-6


class TestBruteForceAgreement:
    """Branch-and-bound reaches the brute-force optimum on random instances."""

    @pytest.mark.parametrize("seed", range(25))
    def test_random_instance(self, seed: int):
        model = random_milp(seed)
        exact = brute_force_binary(model)
        outcome = solve_bb(model)
        assert outcome.status is exact.status
        if exact.status is SolveStatus.OPTIMAL:
            assert outcome.objective == pytest.approx(exact.objective, abs=1e-6)
            assert model.max_violation(outcome.assignment) <= 1e-6

    def test_cap(self):
        model = knapsack(list(range(1, 6)), [1] * 5, 3)
        with pytest.raises(TooManyBinariesError):
            brute_force_binary(model, SolverSettings(brute_force_cap=4))

    def test_fixed_binaries_not_enumerated(self):
        model = MilpModel()
        x = model.add_vars("x", 3, VarKind.BINARY)
        model.fix(x[:2], 1.0)
        model.add_objective(x, [1.0, 1.0, -1.0])
        outcome = brute_force_binary(model.seal())
        assert outcome.nodes == 2
        assert outcome.objective == pytest.approx(1.0)
