"""DC power-flow steady states and operational-limit checks."""

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg
from fastmcp.utilities.logging import get_logger

from toposhift.errors import DisconnectedError, PowerImbalanceError
from toposhift.grid import (
    DEFAULT_ENUMERATION_CAP,
    GridCase,
    as_topology,
    incidence_matrix,
    intermediate_variants,
    intersection_topology,
    is_connected,
)

logger = get_logger(__name__)

BALANCE_TOL = 1e-8
PIVOT_TOL = 1e-10
# Violations at or below this size are reported as zero.
LIMIT_TOL = 1e-9


class Condition4Mode(str, Enum):
    EXHAUSTIVE = "exhaustive"
    ASSUMPTION = "assumption"


@dataclass(frozen=True)
class FlowState:
    """Steady state of one topology: bus angles, branch flows and generation."""

    theta: np.ndarray
    p_l: np.ndarray
    p_g: np.ndarray

    def angle_differences(self, case: GridCase) -> np.ndarray:
        src, dst = case.ends
        return self.theta[src] - self.theta[dst]


@dataclass(frozen=True)
class ViolationReport:
    """Per-branch limit violations (angle difference and flow), all nonnegative."""

    angle: np.ndarray
    flow: np.ndarray
    relaxed: bool

    @property
    def total(self) -> float:
        return float(self.angle.sum() + self.flow.sum())

    @property
    def ok(self) -> bool:
        return self.total == 0.0


def solve_dc_flow(case: GridCase, z, p_g) -> FlowState:
    """Solve the DC power flow of topology ``z`` under generation ``p_g``.

    Raises:
        DisconnectedError: If the switched-on branches do not span all buses.
        PowerImbalanceError: If total generation differs from total load.
    """
    z = as_topology(case, z)
    p_g = np.asarray(p_g, dtype=float)
    injection = p_g - case.p_d
    if abs(injection.sum()) > BALANCE_TOL:
        raise PowerImbalanceError(
            f"power imbalance: generation minus load is {injection.sum():.3e}"
        )
    if not is_connected(case, z):
        raise DisconnectedError()

    E = incidence_matrix(case)
    B = E @ np.diag(case.b * z) @ E.T
    keep = np.arange(case.n_buses) != case.ref
    theta = np.zeros(case.n_buses)
    if keep.any():
        B_red = B[np.ix_(keep, keep)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(B_red)
        if np.min(np.abs(np.diag(lu))) < PIVOT_TOL:
            raise DisconnectedError()
        theta[keep] = scipy.linalg.lu_solve((lu, piv), injection[keep])

    p_l = case.b * z * (E.T @ theta)
    residual = np.max(np.abs(E @ p_l - injection)) if case.n_branches else 0.0
    logger.debug(f"DC flow solved, max balance residual {residual:.2e}")
    return FlowState(theta=theta, p_l=p_l, p_g=p_g)


def check_limits(
    case: GridCase, z, state: FlowState, relaxed: bool = False
) -> ViolationReport:
    """Angle-difference and flow-limit violations of the switched-on branches."""
    z = np.asarray(z, dtype=int)
    if relaxed:
        theta_limit, flow_limit = case.theta_max_relaxed, case.p_max_relaxed
    else:
        theta_limit, flow_limit = case.theta_max, case.p_max
    angle = np.maximum(np.abs(state.angle_differences(case)) - theta_limit, 0.0) * z
    flow = np.maximum(np.abs(state.p_l) - flow_limit, 0.0) * z
    angle[angle <= LIMIT_TOL] = 0.0
    flow[flow <= LIMIT_TOL] = 0.0
    return ViolationReport(angle=angle, flow=flow, relaxed=relaxed)


def topology_violation(
    case: GridCase, z, p_g, relaxed: bool = False
) -> ViolationReport | None:
    """Limit violations at the steady state of ``z``, or None if ``z`` is disconnected."""
    try:
        state = solve_dc_flow(case, z, p_g)
    except DisconnectedError:
        return None
    return check_limits(case, z, state, relaxed=relaxed)


def condition2_feasible(case: GridCase, z, p_g) -> bool:
    """Transitional topology is connected and within normal limits."""
    report = topology_violation(case, z, p_g, relaxed=False)
    return report is not None and report.ok


def condition4_feasible(
    case: GridCase,
    z_prev,
    z_next,
    p_g,
    mode: Condition4Mode = Condition4Mode.EXHAUSTIVE,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> bool:
    """Every intermediate topology of the batch is connected and within relaxed limits.

    ``assumption`` mode checks only the intersection topology.

    Raises:
        EnumerationTooLargeError: In exhaustive mode when the batch exceeds ``cap``.
    """
    z_prev = np.asarray(z_prev, dtype=int)
    z_next = np.asarray(z_next, dtype=int)
    if np.array_equal(z_prev, z_next):
        return True
    if Condition4Mode(mode) is Condition4Mode.ASSUMPTION:
        candidates = [intersection_topology(z_prev, z_next)]
    else:
        candidates = [z_prev + delta for delta in intermediate_variants(z_prev, z_next, cap)]
    for z in candidates:
        report = topology_violation(case, z, p_g, relaxed=True)
        if report is None or not report.ok:
            return False
    return True


def dispatch_cost(case: GridCase, p_g) -> float:
    """Total generation cost: linear plus convex quadratic terms per bus."""
    p_g = np.asarray(p_g, dtype=float)
    linear = np.array([bus.cost_linear for bus in case.buses])
    quadratic = np.array([bus.cost_quadratic for bus in case.buses])
    return float(linear @ p_g + quadratic @ (p_g**2))
