"""Tests for DC power flow and limit checks."""

import numpy as np
import pytest

from conftest import CRITICAL_PG, CRITICAL_Z0, FIVE_PG, FIVE_Z0, FIVE_ZT, FOUR_PG, FOUR_Z0, FOUR_ZT
from toposhift.dcflow import (
    Condition4Mode,
    check_limits,
    condition2_feasible,
    condition4_feasible,
    dispatch_cost,
    solve_dc_flow,
    topology_violation,
)
from toposhift.errors import DisconnectedError, EnumerationTooLargeError, PowerImbalanceError
from toposhift.grid import GridCase, incidence_matrix


class TestSolveDcFlow:
    """Tests for the steady-state solve."""

    def test_parallel_branches_split_by_susceptance(self, two_bus: GridCase):
        state = solve_dc_flow(two_bus, [1, 1], [1.0, 0.0])
        assert state.p_l == pytest.approx([0.25, 0.75])
        assert state.theta[0] == 0.0
        assert state.theta[1] == pytest.approx(-1.0 / 40.0)

    def test_open_branch_carries_nothing(self, two_bus: GridCase):
        state = solve_dc_flow(two_bus, [1, 0], [1.0, 0.0])
        assert state.p_l == pytest.approx([1.0, 0.0])

    def test_radial_flows(self, five_bus: GridCase):
        state = solve_dc_flow(five_bus, FIVE_Z0, FIVE_PG)
        assert state.p_l == pytest.approx([2.0, 2.0, 1.0, 1.0, 0.0, 0.0])
        assert state.angle_differences(five_bus) == pytest.approx([2.0, 2.0, 1.0, 1.0, 6.0, 3.0])

    def test_flow_balance(self, five_bus: GridCase):
        state = solve_dc_flow(five_bus, [1, 1, 1, 1, 1, 1], FIVE_PG)
        injection = np.array(FIVE_PG) - five_bus.p_d
        assert incidence_matrix(five_bus) @ state.p_l == pytest.approx(injection)

    def test_imbalance(self, five_bus: GridCase):
        with pytest.raises(PowerImbalanceError):
            solve_dc_flow(five_bus, FIVE_Z0, [1.0, 0.0, 0.0, 0.0, 0.0])

    def test_disconnected(self, five_bus: GridCase):
        with pytest.raises(DisconnectedError):
            solve_dc_flow(five_bus, [1, 0, 1, 0, 0, 0], FIVE_PG)

    def test_triangle_splits_two_to_one(self, triangle: GridCase):
        doc = triangle.model_dump(by_alias=True)
        doc["buses"][2]["p_d"] = 0.0
        case = GridCase.model_validate(doc)
        state = solve_dc_flow(case, [1, 1, 1], [1.0, 0.0, 0.0])
        # 1-2 direct, 2-3 carries the detour against its orientation, 1-3 feeds it.
        assert state.p_l == pytest.approx([2.0 / 3.0, -1.0 / 3.0, 1.0 / 3.0])

    def test_branch_order_does_not_matter(self, triangle: GridCase):
        state = solve_dc_flow(triangle, [1, 1, 1], [2.0, 0.0, 0.0])
        doc = triangle.model_dump(by_alias=True)
        order = [2, 0, 1]
        doc["branches"] = [doc["branches"][i] for i in order]
        permuted = solve_dc_flow(GridCase.model_validate(doc), [1, 1, 1], [2.0, 0.0, 0.0])
        assert permuted.p_l == pytest.approx(state.p_l[order])
        assert permuted.theta == pytest.approx(state.theta)


class TestLimits:
    """Tests for normal and relaxed limit checks."""

    def test_within_limits(self, five_bus: GridCase):
        state = solve_dc_flow(five_bus, FIVE_Z0, FIVE_PG)
        report = check_limits(five_bus, FIVE_Z0, state)
        assert report.ok
        assert report.total == 0.0

    def test_flow_violation_measured(self, critical: GridCase):
        state = solve_dc_flow(critical, CRITICAL_Z0, CRITICAL_PG)
        normal = check_limits(critical, CRITICAL_Z0, state)
        relaxed = check_limits(critical, CRITICAL_Z0, state, relaxed=True)
        assert normal.flow == pytest.approx([0.0, 1.5, 0.0])
        assert relaxed.flow == pytest.approx([0.0, 1.4, 0.0])
        assert relaxed.relaxed and not normal.relaxed
        assert not relaxed.ok

    def test_open_branches_ignored(self, critical: GridCase):
        state = solve_dc_flow(critical, CRITICAL_Z0, CRITICAL_PG)
        report = check_limits(critical, CRITICAL_Z0, state)
        assert report.angle[2] == 0.0
        assert report.flow[2] == 0.0

    def test_topology_violation_none_when_disconnected(self, five_bus: GridCase):
        assert topology_violation(five_bus, [1, 0, 1, 0, 0, 0], FIVE_PG) is None

    def test_condition2(self, five_bus: GridCase, critical: GridCase):
        assert condition2_feasible(five_bus, FIVE_ZT, FIVE_PG)
        assert not condition2_feasible(critical, CRITICAL_Z0, CRITICAL_PG)
        assert not condition2_feasible(five_bus, [1, 0, 1, 0, 0, 0], FIVE_PG)


class TestCondition4:
    """Tests for intermediate-topology feasibility of one batch."""

    def test_disconnected_variant_fails_exhaustive(self, four_bus: GridCase):
        assert not condition4_feasible(four_bus, FOUR_Z0, FOUR_ZT, FOUR_PG)

    def test_assumption_checks_intersection(self, four_bus: GridCase):
        # Intersection leaves bus 4 isolated.
        assert not condition4_feasible(
            four_bus, FOUR_Z0, FOUR_ZT, FOUR_PG, mode=Condition4Mode.ASSUMPTION
        )

    def test_closing_then_opening_is_feasible(self, four_bus: GridCase):
        ring = [1, 1, 1, 1]
        assert condition4_feasible(four_bus, FOUR_Z0, ring, FOUR_PG)
        assert condition4_feasible(four_bus, ring, FOUR_ZT, FOUR_PG)

    def test_identical_topologies(self, five_bus: GridCase):
        assert condition4_feasible(five_bus, FIVE_Z0, FIVE_Z0, FIVE_PG)

    def test_cap(self, five_bus: GridCase):
        with pytest.raises(EnumerationTooLargeError):
            condition4_feasible(five_bus, FIVE_Z0, FIVE_ZT, FIVE_PG, cap=2)


class TestDispatchCost:
    def test_linear(self, critical: GridCase):
        assert dispatch_cost(critical, [2.0, 0.0, 0.0]) == pytest.approx(2.0)
        assert dispatch_cost(critical, [0.5, 0.0, 1.5]) == pytest.approx(8.0)

    def test_quadratic(self, two_bus: GridCase):
        case = two_bus.model_copy(
            update={"buses": [two_bus.buses[0].model_copy(update={"cost_quadratic": 2.0}), two_bus.buses[1]]}
        )
        assert dispatch_cost(case, [1.5, 0.0]) == pytest.approx(1.5 + 2.0 * 2.25)
