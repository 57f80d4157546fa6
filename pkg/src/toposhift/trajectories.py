"""Topology trajectories: ad hoc generation, validation, metrics and MILP decoding."""

import math
import time

import numpy as np
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, ConfigDict, Field, field_validator

from toposhift.config import OttConfig, SolverSettings, SwitchingMode
from toposhift.dcflow import (
    Condition4Mode,
    FlowState,
    check_limits,
    solve_dc_flow,
)
from toposhift.errors import CaseError, DisconnectedError, InfeasibleError, ModelError
from toposhift.formulations import OttDecision, monitored_components, property_values
from toposhift.grid import (
    DEFAULT_ENUMERATION_CAP,
    GridCase,
    as_topology,
    changed_agents,
    intermediate_variants,
    intersection_topology,
    is_connected,
)
from toposhift.milp import WARM_START_TOL, MilpModel, SolveOutcome, complete_assignment

logger = get_logger(__name__)


# =============================================================================
# Models
# =============================================================================


class Trajectory(BaseModel):
    """Sequence of transitional topologies from ``z_0`` to ``z_T``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    topologies: list[list[int]] = Field(min_length=1)

    @field_validator("topologies")
    @classmethod
    def _same_length(cls, value: list[list[int]]) -> list[list[int]]:
        if len({len(z) for z in value}) != 1:
            raise ValueError("all topologies must have the same length")
        for z in value:
            if any(v not in (0, 1) for v in z):
                raise ValueError("topology entries must be 0 or 1")
        return value

    @classmethod
    def from_arrays(cls, topologies) -> "Trajectory":
        """Build from arrays, dropping consecutive repeats."""
        kept: list[list[int]] = []
        for z in topologies:
            row = [int(v) for v in np.asarray(z)]
            if not kept or kept[-1] != row:
                kept.append(row)
        return cls(topologies=kept)

    @property
    def T(self) -> int:
        """Number of switching batches."""
        return len(self.topologies) - 1

    def arrays(self) -> list[np.ndarray]:
        return [np.array(z, dtype=int) for z in self.topologies]

    def batches(self) -> list[list[int]]:
        """Branch indices switched in each batch."""
        arrs = self.arrays()
        return [np.flatnonzero(a != b).tolist() for a, b in zip(arrs, arrs[1:])]

    def padded(self, T_u: int) -> list[np.ndarray]:
        """Topologies ``z_0 .. z_T_u`` with the terminal topology repeated."""
        if self.T > T_u:
            raise ModelError(f"trajectory has {self.T} batches, horizon is {T_u}")
        arrs = self.arrays()
        return arrs + [arrs[-1]] * (T_u - self.T)


class MetricReport(BaseModel):
    """Transition metrics and condition verdicts of one trajectory."""

    H_b: float = 0.0
    H_b_linear: float = 0.0
    H_v: float = 0.0
    H_c: float = 0.0
    H_p: float = 0.0
    H_n: int = 0
    condition1: bool = True
    condition2: bool = True
    condition4: bool = True
    condition5: bool | None = None
    details: list[str] = Field(default_factory=list)

    @property
    def feasible(self) -> bool:
        """All conditions hold and no limit is exceeded."""
        return (
            self.condition1
            and self.condition2
            and self.condition4
            and self.condition5 is not False
            and self.H_p == 0.0
        )


# =============================================================================
# Ad Hoc Trajectories
# =============================================================================


def adhoc_syn(z_0, z_T) -> Trajectory:
    """Close every new branch in one batch, then open every retired branch."""
    z_0 = np.asarray(z_0, dtype=int)
    z_T = np.asarray(z_T, dtype=int)
    return Trajectory.from_arrays([z_0, z_0 | z_T, z_T])


def adhoc_asy(case: GridCase, z_0, z_T) -> Trajectory:
    """Agent-by-agent closings in partition order, then agent-by-agent openings.

    Agents owning no changed branch contribute no batch.
    """
    if not case.agents:
        raise CaseError("asynchronous ad hoc trajectory needs an agent partition")
    z_0 = as_topology(case, z_0)
    z_T = as_topology(case, z_T)
    closing = (z_T == 1) & (z_0 == 0)
    opening = (z_T == 0) & (z_0 == 1)
    sequence = [z_0]
    z = z_0.copy()
    for moves, value in ((closing, 1), (opening, 0)):
        for mask in case.agent_masks:
            batch = moves & mask
            if batch.any():
                z = z.copy()
                z[batch] = value
                sequence.append(z)
    return Trajectory.from_arrays(sequence)


def adhoc_one(z_0, z_T, order=None) -> Trajectory:
    """One switch per batch; closings (ascending index) before openings by default.

    Raises:
        CaseError: If ``order`` is not a permutation of the changed branches.
    """
    z_0 = np.asarray(z_0, dtype=int)
    z_T = np.asarray(z_T, dtype=int)
    changed = np.flatnonzero(z_0 != z_T)
    if order is None:
        closings = [e for e in changed if z_T[e] == 1]
        openings = [e for e in changed if z_T[e] == 0]
        order = closings + openings
    else:
        order = [int(e) for e in order]
        if sorted(order) != changed.tolist():
            raise CaseError("order must be a permutation of the changed branches")
    sequence = [z_0]
    z = z_0.copy()
    for e in order:
        z = z.copy()
        z[e] = z_T[e]
        sequence.append(z)
    return Trajectory.from_arrays(sequence)


# =============================================================================
# Metrics and Validation
# =============================================================================


def _states(case: GridCase, topologies: list[np.ndarray], p_g) -> list[FlowState | None]:
    states = []
    for z in topologies:
        try:
            states.append(solve_dc_flow(case, z, p_g))
        except DisconnectedError:
            states.append(None)
    return states


def metrics(case: GridCase, traj: Trajectory, p_g, config: OttConfig | None = None) -> MetricReport:
    """Boundedness, volatility, switching cost and batch count of a trajectory.

    Properties are evaluated at DC steady states; the envelope is spanned by
    the endpoint states. Disconnected transitional topologies contribute
    nothing and are listed in ``details``; skipped volatility terms can leave
    ``H_v`` negative.

    Raises:
        DisconnectedError: If an endpoint topology is disconnected.
    """
    config = config or OttConfig()
    topologies = [as_topology(case, z) for z in traj.arrays()]
    components = monitored_components(case, config)
    states = _states(case, topologies, p_g)
    if states[0] is None or states[-1] is None:
        raise DisconnectedError("trajectory endpoints must be connected")

    values = [None if s is None else property_values(case, s, components) for s in states]
    w_b = np.array([c.w_b for c in components])
    w_v = np.array([c.w_v for c in components])
    upper = np.maximum(values[0], values[-1])
    lower = np.minimum(values[0], values[-1])

    report = MetricReport(H_n=traj.T)
    quadratic = linear = 0.0
    for t in range(1, traj.T):
        if values[t] is None:
            report.details.append(f"transitional topology {t} is disconnected")
            continue
        excess = np.maximum(values[t] - upper, 0.0) + np.maximum(lower - values[t], 0.0)
        quadratic += config.duration(t) * float(w_b @ excess**2)
        linear += config.duration(t) * float(w_b @ excess)

    volatility = -float(w_v @ np.abs(values[-1] - values[0]))
    for t in range(1, traj.T + 1):
        if values[t] is None or values[t - 1] is None:
            report.details.append(f"volatility term of batch {t} skipped")
            continue
        volatility += float(w_v @ np.abs(values[t] - values[t - 1]))

    switching = sum(
        float(case.switch_cost @ np.abs(b - a)) for a, b in zip(topologies, topologies[1:])
    )
    return report.model_copy(
        update=dict(
            H_b=math.sqrt(quadratic),
            H_b_linear=linear,
            H_v=volatility,
            H_c=switching,
        )
    )


def validate_trajectory(
    case: GridCase,
    traj: Trajectory,
    p_g,
    config: OttConfig | None = None,
    mode: SwitchingMode | None = None,
    condition4: Condition4Mode = Condition4Mode.EXHAUSTIVE,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> MetricReport:
    """Check a trajectory against the transition conditions and compute its metrics.

    Condition 1: every batch keeps the intersection of its endpoints
    connected. Condition 2: every transitional topology is connected and
    within normal limits. Condition 4: every intermediate topology of a
    batch (all variants, or only the intersection in assumption mode) is
    connected and within relaxed limits. Condition 5 (AS only): each batch
    is owned by one agent.

    ``H_p`` sums normal-limit violations of the transitional topologies and
    relaxed-limit violations of the checked intermediates.

    Raises:
        CaseError: If the trajectory does not match the case.
        EnumerationTooLargeError: In exhaustive mode when a batch exceeds ``cap``.
    """
    start = time.perf_counter()
    config = config or OttConfig()
    mode = config.mode if mode is None else SwitchingMode(mode)
    condition4 = Condition4Mode(condition4)
    if len(traj.topologies[0]) != case.n_branches:
        raise CaseError(
            f"trajectory topologies have {len(traj.topologies[0])} entries, "
            f"case has {case.n_branches} branches"
        )
    topologies = [as_topology(case, z) for z in traj.arrays()]
    report = metrics(case, traj, p_g, config)
    details = list(report.details)
    cond1 = cond2 = cond4 = True
    H_p = 0.0

    for t in range(1, traj.T):
        z = topologies[t]
        if not is_connected(case, z):
            cond2 = False
            details.append(f"condition 2: transitional topology {t} is disconnected")
            continue
        violation = check_limits(case, z, solve_dc_flow(case, z, p_g), relaxed=False)
        if not violation.ok:
            cond2 = False
            H_p += violation.total
            details.append(f"condition 2: transitional topology {t} exceeds normal limits by {violation.total:.9g}")

    for t in range(1, traj.T + 1):
        z_prev, z_next = topologies[t - 1], topologies[t]
        meet = intersection_topology(z_prev, z_next)
        if not is_connected(case, meet):
            cond1 = False
            details.append(f"condition 1: batch {t} disconnects the network")
        if condition4 is Condition4Mode.ASSUMPTION:
            candidates = [meet]
        else:
            candidates = [z_prev + delta for delta in intermediate_variants(z_prev, z_next, cap)]
            if not any(np.array_equal(meet, z) for z in candidates):
                candidates.append(meet)
        batch_ok = True
        for z in candidates:
            if not is_connected(case, z):
                batch_ok = False
                continue
            violation = check_limits(case, z, solve_dc_flow(case, z, p_g), relaxed=True)
            if not violation.ok:
                batch_ok = False
                H_p += violation.total
        cond4 = cond4 and batch_ok
        if not batch_ok:
            details.append(f"condition 4: batch {t} has an infeasible intermediate topology")

    cond5 = None
    if mode is SwitchingMode.AS:
        cond5 = all(
            len(changed_agents(case, a, b)) <= 1 for a, b in zip(topologies, topologies[1:])
        )
        if not cond5:
            details.append("condition 5: a batch spans several agents")

    logger.debug(f"Validated trajectory with {traj.T} batches in {(time.perf_counter() - start) * 1000:.1f}ms")
    return report.model_copy(
        update=dict(
            H_p=H_p,
            condition1=cond1,
            condition2=cond2,
            condition4=cond4,
            condition5=cond5,
            details=details,
        )
    )


def objective(report: MetricReport, config: OttConfig) -> float:
    """Weighted transition objective with linear boundedness, comparable to model objectives."""
    return (
        config.alpha_b * report.H_b_linear
        + config.alpha_v * report.H_v
        + config.alpha_c * report.H_c
        + config.alpha_p * report.H_p
        + config.alpha_n * report.H_n
    )


# =============================================================================
# Model Encoding and Decoding
# =============================================================================


def encode(
    model: MilpModel, traj: Trajectory, settings: SolverSettings | None = None
) -> np.ndarray | None:
    """Complete assignment of a transition model realizing ``traj``.

    Topologies, products, batch indicators and agent selections are fixed;
    the LP fills in flows, slacks and auxiliaries. Returns None when the
    trajectory admits no feasible completion.
    """
    T_u = model.meta["T_u"]
    padded = traj.padded(T_u)
    fixed: dict[int, float] = {}

    def assign(group: str, values) -> None:
        for i, v in zip(model.group(group), np.asarray(values, dtype=float)):
            fixed[int(i)] = float(v)

    for t, z in enumerate(padded):
        assign(f"z/{t}", z)
    for t in range(1, T_u + 1):
        assign(f"zb/{t}", padded[t] * padded[t - 1])
    assign("delta", [float(t <= traj.T) for t in range(1, T_u + 1)])

    case: GridCase | None = model.meta.get("case")
    if model.has_group("u/1") and case is not None:
        for t in range(1, T_u + 1):
            owners = changed_agents(case, padded[t - 1], padded[t])
            if len(owners) > 1:
                return None
            selection = np.zeros(len(case.agents))
            selection[owners[0] if owners else 0] = 1.0
            assign(f"u/{t}", selection)
    x = complete_assignment(model, fixed, settings)
    if x is not None and model.has_group("eta1"):
        # The envelope selectors follow the endpoint values of the completed dispatch.
        regions = model.meta["transitional"]
        first = [regions[0].prop(case, c).value(x) for c in model.meta["components"]]
        last = [regions[T_u].prop(case, c).value(x) for c in model.meta["components"]]
        top_is_first = np.array(first) >= np.array(last)
        assign("eta1", top_is_first)
        assign("eta2", ~top_is_first)
        x = complete_assignment(model, fixed, settings)
    if x is None or model.max_violation(x) > WARM_START_TOL:
        return None
    return x


def decode(outcome: SolveOutcome, model: MilpModel) -> tuple[Trajectory, OttDecision]:
    """Trajectory and decision from a solved transition model; padding is stripped.

    Raises:
        InfeasibleError: If the outcome carries no assignment.
    """
    if not outcome.has_solution:
        raise InfeasibleError(f"no solution to decode ({outcome.status.value})")
    x = outcome.assignment
    T_u = model.meta["T_u"]

    def values(group: str) -> np.ndarray:
        return x[model.group(group)]

    z = [np.round(values(f"z/{t}")).astype(int) for t in range(T_u + 1)]
    zb = [np.round(values(f"zb/{t}")).astype(int) for t in range(1, T_u + 1)]
    delta = np.round(values("delta")).astype(int)
    u = [np.round(values(f"u/{t}")).astype(int) for t in range(1, T_u + 1) if model.has_group(f"u/{t}")]
    if model.has_group("pg"):
        p_g = values("pg")
    else:
        p_g = np.asarray(model.meta["p_g"], dtype=float)
    traj = Trajectory.from_arrays(z)
    decision = OttDecision(
        topologies=traj.arrays(),
        z=z,
        zb=zb,
        delta=delta,
        u=u,
        p_g=p_g,
        groups={name: x[idx] for name, idx in model.tags.items()},
        T=traj.T,
        T_u=T_u,
        objective=outcome.objective,
        status=outcome.status.value,
        nodes=outcome.nodes,
    )
    return traj, decision


def model_slack_total(model: MilpModel, x: np.ndarray) -> float:
    """Sum of every limit slack in a transition model assignment."""
    return float(
        sum(x[idx].sum() for name, idx in model.tags.items() if name.startswith("xi_"))
    )
