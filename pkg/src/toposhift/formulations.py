"""MILP formulations: DC optimal transmission switching, optimal topology
transition, and the transition-embedded topology optimization.

Each constraint family has its own builder so it can be tested in
isolation; ``build_dc_ots``, ``build_ott`` and ``build_tetop`` compose them.

Index conventions: topologies ``z/0 .. z/T_u``; products ``zb/1 .. zb/T_u``
(``zb/t`` is the intersection of ``z/t`` and ``z/t-1``); batch indicators
``delta`` indexed 1..T_u at positions 0..T_u-1.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from fastmcp.utilities.logging import get_logger

from toposhift.config import (
    WEIGHT_SEPARATION,
    BoundednessVariant,
    OttConfig,
    SwitchingMode,
)
from toposhift.dcflow import FlowState, solve_dc_flow
from toposhift.errors import CaseError, ConfigError
from toposhift.grid import GridCase, as_topology, incidence_matrix, uniquely_balanced_vector
from toposhift.milp import MilpModel, Sense, VarKind

logger = get_logger(__name__)

INF = np.inf


# =============================================================================
# Linear Expressions
# =============================================================================


@dataclass
class LinExpr:
    """Sparse affine expression ``sum(coef * x[idx]) + const``."""

    terms: list[tuple[int, float]] = field(default_factory=list)
    const: float = 0.0

    @classmethod
    def var(cls, idx: int, coef: float = 1.0) -> "LinExpr":
        return cls([(int(idx), float(coef))], 0.0)

    @classmethod
    def constant(cls, value: float) -> "LinExpr":
        return cls([], float(value))

    def __add__(self, other: "LinExpr") -> "LinExpr":
        return LinExpr(self.terms + other.terms, self.const + other.const)

    def __neg__(self) -> "LinExpr":
        return LinExpr([(i, -c) for i, c in self.terms], -self.const)

    def __sub__(self, other: "LinExpr") -> "LinExpr":
        return self + (-other)

    def __mul__(self, k: float) -> "LinExpr":
        return LinExpr([(i, c * k) for i, c in self.terms], self.const * k)

    __rmul__ = __mul__

    @property
    def is_constant(self) -> bool:
        return not any(c for _, c in self.terms)

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * x[i] for i, c in self.terms)


def constrain(model: MilpModel, expr: LinExpr, sense: Sense | str, name: str | None = None) -> None:
    """Add ``expr (sense) 0``."""
    model.add_constraint(expr.terms, sense, -expr.const, name)


def total(exprs) -> LinExpr:
    result = LinExpr()
    for expr in exprs:
        result = result + expr
    return result


def _extend_tag(model: MilpModel, name: str, idx) -> None:
    current = model.tags.get(name, np.zeros(0, dtype=int))
    model.tag(name, np.append(current, np.asarray(idx, dtype=int)))


# =============================================================================
# Monitored Properties and Big-M Policy
# =============================================================================


class PropertyKind(str, Enum):
    FLOW = "flow"
    ANGLE = "angle"


@dataclass(frozen=True)
class Component:
    """One monitored electrical property with its boundedness/volatility weights."""

    kind: PropertyKind
    branch: int
    w_b: float
    w_v: float


def monitored_components(case: GridCase, config: OttConfig) -> list[Component]:
    """Branch flows and angle differences with a nonzero weight, flows first."""
    components = []
    for kind, wb, wv in (
        (PropertyKind.FLOW, config.w_b.flow, config.w_v.flow),
        (PropertyKind.ANGLE, config.w_b.angle, config.w_v.angle),
    ):
        if wb == 0 and wv == 0:
            continue
        components.extend(Component(kind, e, wb, wv) for e in range(case.n_branches))
    return components


def property_values(case: GridCase, state: FlowState, components: list[Component]) -> np.ndarray:
    diffs = state.angle_differences(case)
    return np.array(
        [state.p_l[c.branch] if c.kind is PropertyKind.FLOW else diffs[c.branch] for c in components]
    )


@dataclass(frozen=True)
class BigM:
    delta: float
    connectivity: float
    potential: float
    dc: float


def big_m(case: GridCase, config: OttConfig) -> BigM:
    """Per-family big-M constants."""
    n = case.n_buses
    dc = float(np.max(case.theta_max_relaxed, initial=0.0)) * (1 + case.diameter) * float(
        np.max(case.b, initial=0.0)
    )
    return BigM(
        delta=float(case.n_branches),
        connectivity=float(n),
        # Potential differences along a path of up to n-1 branches, each
        # carrying at most n-1 units of flow.
        potential=float(max(n * n, 1)),
        dc=max(dc, config.big_m_floor),
    )


# =============================================================================
# Region Variables
# =============================================================================


@dataclass(frozen=True)
class Region:
    """DC state variables of one topology inside a model."""

    theta: np.ndarray
    p_l: np.ndarray
    xi: np.ndarray | None

    def prop(self, case: GridCase, comp: Component) -> LinExpr:
        if comp.kind is PropertyKind.FLOW:
            return LinExpr.var(self.p_l[comp.branch])
        src, dst = case.ends
        e = comp.branch
        return LinExpr([(int(self.theta[src[e]]), 1.0), (int(self.theta[dst[e]]), -1.0)])


@dataclass(frozen=True)
class OttDecision:
    """Decoded transition solution."""

    topologies: list[np.ndarray]
    z: list[np.ndarray]
    zb: list[np.ndarray]
    delta: np.ndarray
    u: list[np.ndarray]
    p_g: np.ndarray
    groups: dict[str, np.ndarray]
    T: int
    T_u: int
    objective: float | None
    status: str
    nodes: int = 0

    @property
    def terminal(self) -> np.ndarray:
        return self.topologies[-1]


# =============================================================================
# Constraint Families
# =============================================================================


def add_product_linearization(
    model: MilpModel, z_t: np.ndarray, z_prev: np.ndarray, tag: str
) -> np.ndarray:
    """Continuous ``zb`` equal to ``z_t * z_prev`` for binary inputs."""
    zb = model.add_vars(tag, len(z_t), VarKind.CONTINUOUS, 0.0, 1.0, tag=tag)
    for b, a, p in zip(zb, z_t, z_prev):
        model.add_constraint([(b, 1.0), (a, -1.0)], Sense.LE, 0.0)
        model.add_constraint([(b, 1.0), (p, -1.0)], Sense.LE, 0.0)
        model.add_constraint([(b, 1.0), (a, -1.0), (p, -1.0)], Sense.GE, -1.0)
    return zb


def abs_expansion(z_t: np.ndarray, z_prev: np.ndarray, zb: np.ndarray) -> list[LinExpr]:
    """Per-branch ``|z_t - z_prev|`` as ``z_t + z_prev - 2 zb``."""
    return [
        LinExpr([(int(a), 1.0), (int(p), 1.0), (int(b), -2.0)])
        for a, p, b in zip(z_t, z_prev, zb)
    ]


def add_delta_linking(
    model: MilpModel, changes: list[list[LinExpr]], delta: np.ndarray, M: float
) -> None:
    """``delta_t`` is 1 exactly when batch ``t`` switches something."""
    for t, d in enumerate(delta):
        count = total(changes[t])
        constrain(model, count - LinExpr.var(d, M), Sense.LE, f"delta_up[{t + 1}]")
        constrain(model, count - LinExpr.var(d), Sense.GE, f"delta_lo[{t + 1}]")


def add_sameness_exclusion(model: MilpModel, delta: np.ndarray) -> None:
    """Admit only batch patterns 1..1 0..0 (all switching first, padding after).

    For every consecutive triple the forbidden patterns (0,0,1), (0,1,0),
    (0,1,1) and (1,0,1) are cut off; a horizon of two has no triple and gets
    the pair inequality instead.
    """
    forbidden = ((0, 0, 1), (0, 1, 0), (0, 1, 1), (1, 0, 1))
    for t in range(len(delta) - 2):
        triple = delta[t : t + 3]
        for pattern in forbidden:
            # Sum of literals that differ from the pattern must be at least 1.
            terms, rhs = [], 1.0
            for var, bit in zip(triple, pattern):
                if bit:
                    terms.append((int(var), -1.0))
                    rhs -= 1.0
                else:
                    terms.append((int(var), 1.0))
            model.add_constraint(terms, Sense.GE, rhs, f"sameness[{t + 1},{pattern}]")
    if len(delta) == 2:
        model.add_constraint([(delta[0], 1.0), (delta[1], -1.0)], Sense.GE, 0.0, "sameness_pair")


def add_connectedness(
    model: MilpModel, case: GridCase, gate: np.ndarray, tag: str, M: BigM
) -> tuple[np.ndarray, np.ndarray]:
    """Single-commodity potential flow certifying that the gated branches span all buses."""
    src, dst = case.ends
    vartheta = model.add_vars(f"{tag}_pot", case.n_buses, lb=-INF, ub=INF, tag=f"{tag}_pot")
    rho = model.add_vars(f"{tag}_flow", case.n_branches, lb=-INF, ub=INF, tag=f"{tag}_flow")
    for e in range(case.n_branches):
        g = int(gate[e])
        diff = LinExpr([(int(vartheta[src[e]]), 1.0), (int(vartheta[dst[e]]), -1.0), (int(rho[e]), -1.0)])
        # |E'theta - rho| <= Mp (1 - g)
        constrain(model, diff + LinExpr.var(g, M.potential) - LinExpr.constant(M.potential), Sense.LE)
        constrain(model, -diff + LinExpr.var(g, M.potential) - LinExpr.constant(M.potential), Sense.LE)
        # |rho| <= M g
        model.add_constraint([(rho[e], 1.0), (g, -M.connectivity)], Sense.LE, 0.0)
        model.add_constraint([(rho[e], -1.0), (g, -M.connectivity)], Sense.LE, 0.0)
    c = uniquely_balanced_vector(case)
    E = incidence_matrix(case)
    for i in range(case.n_buses):
        cols = np.flatnonzero(E[i])
        model.add_constraint([(rho[e], E[i, e]) for e in cols], Sense.EQ, c[i], f"{tag}_bal[{i}]")
    return vartheta, rho


def add_feasible_region(
    model: MilpModel,
    case: GridCase,
    tag: str,
    gate: np.ndarray,
    p_g,
    relaxed: bool,
    slack: bool,
    M: BigM,
) -> Region:
    """DC power flow and operational limits of a gated topology.

    ``p_g`` is either a fixed generation vector or an array of variable
    indices. With ``slack`` the angle and flow limits are softened by
    nonnegative slacks that are forced to zero on switched-off branches.
    """
    n_e = case.n_branches
    src, dst = case.ends
    theta_lb = np.full(case.n_buses, -INF)
    theta_ub = np.full(case.n_buses, INF)
    theta_lb[case.ref] = theta_ub[case.ref] = 0.0
    theta = model.add_vars(f"theta_{tag}", case.n_buses, lb=theta_lb, ub=theta_ub, tag=f"theta_{tag}")
    p_l = model.add_vars(f"p_{tag}", n_e, lb=-INF, ub=INF, tag=f"p_{tag}")
    xi = model.add_vars(f"xi_{tag}", 2 * n_e, tag=f"xi_{tag}") if slack else None
    theta_limit = case.theta_max_relaxed if relaxed else case.theta_max
    flow_limit = case.p_max_relaxed if relaxed else case.p_max

    for e in range(n_e):
        g = int(gate[e])
        diff = LinExpr([(int(theta[src[e]]), 1.0), (int(theta[dst[e]]), -1.0)])
        ohm = diff * case.b[e] - LinExpr.var(p_l[e])
        off = LinExpr.constant(M.dc) - LinExpr.var(g, M.dc)  # M (1 - g)
        constrain(model, ohm - off, Sense.LE)
        constrain(model, ohm + off, Sense.GE)

        angle_slack = LinExpr.var(xi[e]) if slack else LinExpr()
        flow_slack = LinExpr.var(xi[n_e + e]) if slack else LinExpr()
        limit = LinExpr.constant(theta_limit[e])
        constrain(model, diff - angle_slack - limit - off, Sense.LE)
        constrain(model, -diff - angle_slack - limit - off, Sense.LE)
        cap = LinExpr.var(g, flow_limit[e])
        constrain(model, LinExpr.var(p_l[e]) - cap - flow_slack, Sense.LE)
        constrain(model, -LinExpr.var(p_l[e]) - cap - flow_slack, Sense.LE)
        if slack:
            model.add_constraint([(xi[e], 1.0), (g, -M.dc)], Sense.LE, 0.0)
            model.add_constraint([(xi[n_e + e], 1.0), (g, -M.dc)], Sense.LE, 0.0)

    E = incidence_matrix(case)
    fixed_generation = np.asarray(p_g).dtype.kind == "f"
    for i in range(case.n_buses):
        terms = [(int(p_l[e]), E[i, e]) for e in np.flatnonzero(E[i])]
        if fixed_generation:
            rhs = float(np.asarray(p_g)[i] - case.p_d[i])
        else:
            terms.append((int(p_g[i]), -1.0))
            rhs = -float(case.p_d[i])
        model.add_constraint(terms, Sense.EQ, rhs, f"bal_{tag}[{i}]")
    return Region(theta=theta, p_l=p_l, xi=xi)


def add_boundedness_auxiliaries(
    model: MilpModel,
    components: list[Component],
    values: list[LinExpr],
    upper: list[LinExpr],
    lower: list[LinExpr],
    weight: float,
    tag: str,
    variant: BoundednessVariant,
) -> None:
    """Split excursions above ``upper`` and below ``lower`` into signed parts.

    ``weight`` is ``alpha_b * d_t``; the L1 variant charges
    ``weight * w_b * (rho_up + rho_down)``, the quadratic-export variant the
    square of the same sum.
    """
    for k, comp in enumerate(components):
        if comp.w_b == 0:
            continue
        above_p, above_m, below_p, below_m = (
            model.add_var(f"{tag}_{name}[{k}]") for name in ("up_p", "up_m", "lo_p", "lo_m")
        )
        constrain(
            model,
            values[k] - upper[k] - LinExpr([(above_p, 1.0), (above_m, -1.0)]),
            Sense.EQ,
        )
        constrain(
            model,
            lower[k] - values[k] - LinExpr([(below_p, 1.0), (below_m, -1.0)]),
            Sense.EQ,
        )
        _extend_tag(model, f"{tag}_excess", [above_p, below_p])
        coef = weight * comp.w_b
        if variant is BoundednessVariant.L1:
            model.add_objective([above_p, below_p], coef)
        else:
            model.add_quadratic_objective(above_p, above_p, coef)
            model.add_quadratic_objective(below_p, below_p, coef)
            model.add_quadratic_objective(above_p, below_p, 2 * coef)


def add_volatility_terms(
    model: MilpModel,
    components: list[Component],
    values: list[LinExpr],
    previous: list[LinExpr],
    weight: float,
    tag: str,
) -> None:
    """Charge ``weight * w_v * |value - previous|`` through an L1 epigraph."""
    for k, comp in enumerate(components):
        if comp.w_v == 0:
            continue
        diff = values[k] - previous[k]
        if diff.is_constant:
            model.offset += weight * comp.w_v * abs(diff.const)
            continue
        s = model.add_var(f"{tag}_abs[{k}]")
        constrain(model, diff - LinExpr.var(s), Sense.LE)
        constrain(model, -diff - LinExpr.var(s), Sense.LE)
        model.add_objective(s, weight * comp.w_v)


def add_as_mode(
    model: MilpModel, case: GridCase, changes: list[list[LinExpr]], M: float
) -> list[np.ndarray]:
    """One agent per batch: switches outside the selected agent's set are zero."""
    if not case.agents:
        raise CaseError("asynchronous mode needs an agent partition")
    u_groups = []
    for t, batch in enumerate(changes, start=1):
        u = model.add_vars(f"u{t}", len(case.agents), VarKind.BINARY, tag=f"u/{t}")
        model.add_constraint([(i, 1.0) for i in u], Sense.EQ, 1.0, f"one_agent[{t}]")
        for i, mask in enumerate(case.agent_masks):
            outside = [batch[e] for e in range(case.n_branches) if case.switchable[e] and not mask[e]]
            constrain(
                model,
                total(outside) + LinExpr.var(u[i], M) - LinExpr.constant(M),
                Sense.LE,
                f"agent[{t},{i}]",
            )
        u_groups.append(u)
    return u_groups


def switch_requirement(case: GridCase, z_0: np.ndarray, z_T) -> list[LinExpr]:
    """Per-branch ``|z_0 - z_T|`` with ``z_T`` either fixed or variable indices."""
    exprs = []
    for e in range(case.n_branches):
        if isinstance(z_T, list):
            var = z_T[e]
            exprs.append(LinExpr.var(var) if z_0[e] == 0 else LinExpr.constant(1.0) - LinExpr.var(var))
        else:
            exprs.append(LinExpr.constant(float(abs(z_0[e] - z_T[e]))))
    return exprs


def add_switch_budget(
    model: MilpModel, changes: list[list[LinExpr]], required: list[LinExpr], n_e: int
) -> None:
    """Total switching actions at most the necessary ones plus ``n_e``."""
    used = total(expr for batch in changes for expr in batch)
    constrain(model, used - total(required) - LinExpr.constant(n_e), Sense.LE, "switch_budget")


def add_necessary_only(
    model: MilpModel,
    z: list[np.ndarray],
    changes: list[list[LinExpr]],
    required: list[LinExpr],
    z_0: np.ndarray,
    fixed_terminal: bool,
) -> None:
    """Each branch switches exactly as often as the endpoints require.

    With a fixed terminal topology the never-switched branches have their
    trajectory variables fixed outright.
    """
    n_branches = len(required)
    for e in range(n_branches):
        if fixed_terminal and required[e].const == 0.0:
            for z_t in z[1:-1]:
                model.fix(z_t[e], z_0[e])
            continue
        per_branch = total(batch[e] for batch in changes)
        constrain(model, per_branch - required[e], Sense.EQ, f"necessary[{e}]")


def add_batch_size_one(
    model: MilpModel, changes: list[list[LinExpr]], delta: np.ndarray, exact: bool
) -> None:
    """Batch size exactly one (``exact``) or at most one and only when ``delta_t`` is set."""
    for t, batch in enumerate(changes):
        rhs = LinExpr.constant(1.0) if exact else LinExpr.var(delta[t])
        constrain(model, total(batch) - rhs, Sense.EQ, f"batch_one[{t + 1}]")


def add_dispatch_cost(
    model: MilpModel, case: GridCase, p_g: np.ndarray, weight: float, segments: int
) -> None:
    """Linear costs directly; convex quadratic costs through tangent cuts."""
    lower, upper = case.p_g_bounds
    for i, bus in enumerate(case.buses):
        if bus.cost_linear:
            model.add_objective(p_g[i], weight * bus.cost_linear)
        if bus.cost_quadratic and upper[i] > lower[i]:
            q = model.add_var(f"cost_q[{i}]", lb=0.0, ub=INF)
            _extend_tag(model, "cost_q", [q])
            for point in np.linspace(lower[i], upper[i], segments + 1):
                # q >= c2 (2 p0 p - p0^2)
                model.add_constraint(
                    [(q, 1.0), (p_g[i], -2.0 * bus.cost_quadratic * point)],
                    Sense.GE,
                    -bus.cost_quadratic * point * point,
                )
            model.add_objective(q, weight)
        elif bus.cost_quadratic:
            model.offset += weight * bus.cost_quadratic * lower[i] ** 2


def _generation_vars(model: MilpModel, case: GridCase) -> np.ndarray:
    lower, upper = case.p_g_bounds
    return model.add_vars("pg", case.n_buses, lb=lower, ub=upper, tag="pg")


# =============================================================================
# DC OTS
# =============================================================================


def build_dc_ots(
    case: GridCase,
    n_s: int,
    n_s_min: int = 0,
    z_0=None,
    config: OttConfig | None = None,
) -> MilpModel:
    """Optimal transmission switching under DC power flow, minimizing dispatch cost.

    At most ``n_s`` branches differ from ``z_0`` and at least ``n_s_min``
    branches are switched on.
    """
    config = config or OttConfig()
    z_0 = case.initial_topology() if z_0 is None else as_topology(case, z_0)
    if n_s < 0 or n_s_min < 0:
        raise ConfigError("switching budgets must be nonnegative")
    M = big_m(case, config)
    model = MilpModel("dc_ots")
    z = model.add_vars("z", case.n_branches, VarKind.BINARY, tag="z")
    model.fix(z[~case.switchable], 1.0)
    p_g = _generation_vars(model, case)

    changed = [LinExpr.var(z[e]) if z_0[e] == 0 else LinExpr.constant(1.0) - LinExpr.var(z[e]) for e in range(case.n_branches)]
    constrain(model, total(changed) - LinExpr.constant(n_s), Sense.LE, "budget")
    model.add_constraint([(i, 1.0) for i in z], Sense.GE, float(n_s_min), "min_lines")
    add_connectedness(model, case, z, "conn", M)
    region = add_feasible_region(model, case, "ots", z, p_g, relaxed=False, slack=False, M=M)
    add_dispatch_cost(model, case, p_g, 1.0, config.cost_segments)
    model.meta.update(kind="ots", case=case, z_0=z_0, region=region)
    return model.seal()


# =============================================================================
# OTT
# =============================================================================


def build_ott(
    case: GridCase,
    z_0,
    z_T,
    p_g,
    config: OttConfig,
    batch_size_one: bool = False,
) -> MilpModel:
    """Optimal topology transition from ``z_0`` to ``z_T`` under frozen generation ``p_g``.

    Objective: alpha_b * boundedness + alpha_v * volatility + alpha_c * switching
    cost + alpha_p * slacks + alpha_n * batch count. The constant terminal
    volatility term is carried in ``model.offset``.

    Raises:
        DisconnectedError: If ``z_0`` or ``z_T`` is disconnected.
        CaseError: On AS mode without agents or inconsistent vectors.
    """
    z_0 = as_topology(case, z_0)
    z_T = as_topology(case, z_T)
    p_g = np.asarray(p_g, dtype=float)
    T_u = config.T_u
    M = big_m(case, config)
    components = monitored_components(case, config)
    state_0 = solve_dc_flow(case, z_0, p_g)
    state_T = solve_dc_flow(case, z_T, p_g)
    P_0 = property_values(case, state_0, components)
    P_T = property_values(case, state_T, components)
    P_max, P_min = np.maximum(P_0, P_T), np.minimum(P_0, P_T)

    model = MilpModel(f"ott_T{T_u}")
    z = []
    for t in range(T_u + 1):
        z_t = model.add_vars(f"z{t}", case.n_branches, VarKind.BINARY, tag=f"z/{t}")
        model.fix(z_t[~case.switchable], 1.0)
        z.append(z_t)
    model.fix(z[0], z_0)
    model.fix(z[T_u], z_T)

    zb = [None] + [add_product_linearization(model, z[t], z[t - 1], f"zb/{t}") for t in range(1, T_u + 1)]
    changes = [abs_expansion(z[t], z[t - 1], zb[t]) for t in range(1, T_u + 1)]
    delta = model.add_vars("delta", T_u, VarKind.BINARY, tag="delta")
    add_delta_linking(model, changes, delta, M.delta)
    add_sameness_exclusion(model, delta)

    for t in range(1, T_u + 1):
        add_connectedness(model, case, zb[t], f"conn/{t}", M)

    transitional = {}
    for t in range(1, T_u):
        transitional[t] = add_feasible_region(model, case, f"{t}", z[t], p_g, relaxed=False, slack=True, M=M)
    intermediate = {}
    for t in range(1, T_u + 1):
        intermediate[t] = add_feasible_region(model, case, f"r{t}", zb[t], p_g, relaxed=True, slack=True, M=M)

    upper = [LinExpr.constant(v) for v in P_max]
    lower = [LinExpr.constant(v) for v in P_min]
    values = {0: [LinExpr.constant(v) for v in P_0], T_u: [LinExpr.constant(v) for v in P_T]}
    for t, region in transitional.items():
        values[t] = [region.prop(case, comp) for comp in components]
        add_boundedness_auxiliaries(
            model, components, values[t], upper, lower,
            config.alpha_b * config.duration(t), f"bnd{t}", config.boundedness,
        )
    for t in range(1, T_u + 1):
        add_volatility_terms(model, components, values[t], values[t - 1], config.alpha_v, f"vol{t}")
    model.offset -= config.alpha_v * float(
        sum(c.w_v * abs(a - b) for c, a, b in zip(components, P_0, P_T))
    )

    for batch in changes:
        for e, expr in enumerate(batch):
            for i, coef in expr.terms:
                model.add_objective(i, config.alpha_c * case.switch_cost[e] * coef)
    slacks = [r.xi for r in list(transitional.values()) + list(intermediate.values())]
    for xi in slacks:
        model.add_objective(xi, config.alpha_p)
    model.add_objective(delta, config.alpha_n)

    u = []
    if config.mode is SwitchingMode.AS:
        u = add_as_mode(model, case, changes, M.delta)
    required = switch_requirement(case, z_0, z_T)
    add_switch_budget(model, changes, required, config.n_e)
    if config.necessary_only:
        add_necessary_only(model, z, changes, required, z_0, fixed_terminal=True)
    if batch_size_one:
        add_batch_size_one(model, changes, delta, exact=True)

    model.meta.update(
        kind="ott", case=case, T_u=T_u, mode=config.mode, z_0=z_0, z_T=z_T, p_g=p_g,
        components=components, transitional=transitional, intermediate=intermediate,
        u=u, config=config,
    )
    logger.info(
        f"Built OTT model T_u={T_u} mode={config.mode.value}: {model.n_vars} vars, "
        f"{model.n_constraints} constraints"
    )
    return model.seal()


# =============================================================================
# Transition-Embedded Topology Optimization
# =============================================================================


def build_tetop(
    case: GridCase,
    z_0,
    config: OttConfig,
    beta: float,
    n_s: int,
    n_s_min: int = 0,
    batch_size_one: bool = False,
) -> MilpModel:
    """Co-optimize the terminal topology, its dispatch and the transition to it.

    Objective: ``beta * dispatch cost + H + alpha_n * H_n`` with every
    transitional and intermediate topology held strictly inside its limits
    and one generation vector shared by all of them. ``batch_size_one``
    restricts every batch to at most one switch (the one-switch baseline).

    Raises:
        ConfigError: If ``beta`` is below ``1e3 * alpha_c``.
    """
    if beta < WEIGHT_SEPARATION * config.alpha_c:
        raise ConfigError("beta must be at least 1e3 * alpha_c")
    z_0 = as_topology(case, z_0)
    T_u = config.T_u
    M = big_m(case, config)
    components = monitored_components(case, config)

    model = MilpModel(f"tetop_T{T_u}")
    p_g = _generation_vars(model, case)
    z = []
    for t in range(T_u + 1):
        z_t = model.add_vars(f"z{t}", case.n_branches, VarKind.BINARY, tag=f"z/{t}")
        model.fix(z_t[~case.switchable], 1.0)
        z.append(z_t)
    model.fix(z[0], z_0)

    zb = [None] + [add_product_linearization(model, z[t], z[t - 1], f"zb/{t}") for t in range(1, T_u + 1)]
    changes = [abs_expansion(z[t], z[t - 1], zb[t]) for t in range(1, T_u + 1)]
    delta = model.add_vars("delta", T_u, VarKind.BINARY, tag="delta")
    add_delta_linking(model, changes, delta, M.delta)
    add_sameness_exclusion(model, delta)

    # Terminal topology: OTS budget and connectivity.
    terminal = [int(i) for i in z[T_u]]
    required = switch_requirement(case, z_0, terminal)
    constrain(model, total(required) - LinExpr.constant(n_s), Sense.LE, "terminal_budget")
    model.add_constraint([(i, 1.0) for i in z[T_u]], Sense.GE, float(n_s_min), "terminal_min_lines")
    add_connectedness(model, case, z[T_u], "conn/T", M)
    for t in range(1, T_u + 1):
        add_connectedness(model, case, zb[t], f"conn/{t}", M)

    transitional = {
        t: add_feasible_region(model, case, f"{t}", z[t], p_g, relaxed=False, slack=False, M=M)
        for t in range(T_u + 1)
    }
    intermediate = {
        t: add_feasible_region(model, case, f"r{t}", zb[t], p_g, relaxed=True, slack=False, M=M)
        for t in range(1, T_u + 1)
    }

    values = {t: [r.prop(case, comp) for comp in components] for t, r in transitional.items()}
    P_max = model.add_vars("pmax", len(components), lb=-INF, ub=INF, tag="pmax")
    P_min = model.add_vars("pmin", len(components), lb=-INF, ub=INF, tag="pmin")
    eta1 = model.add_vars("eta1", len(components), VarKind.BINARY, tag="eta1")
    eta2 = model.add_vars("eta2", len(components), VarKind.BINARY, tag="eta2")
    for k in range(len(components)):
        first, last = values[0][k], values[T_u][k]
        top = LinExpr.var(P_max[k])
        constrain(model, top - first, Sense.GE)
        constrain(model, top - last, Sense.GE)
        constrain(model, top - first - LinExpr.constant(M.dc) + LinExpr.var(eta1[k], M.dc), Sense.LE)
        constrain(model, top - last - LinExpr.constant(M.dc) + LinExpr.var(eta2[k], M.dc), Sense.LE)
        model.add_constraint([(eta1[k], 1.0), (eta2[k], 1.0)], Sense.EQ, 1.0)
        constrain(model, top + LinExpr.var(P_min[k]) - first - last, Sense.EQ)

    upper = [LinExpr.var(i) for i in P_max]
    lower = [LinExpr.var(i) for i in P_min]
    for t in range(1, T_u):
        add_boundedness_auxiliaries(
            model, components, values[t], upper, lower,
            config.alpha_b * config.duration(t), f"bnd{t}", config.boundedness,
        )
    for t in range(1, T_u + 1):
        add_volatility_terms(model, components, values[t], values[t - 1], config.alpha_v, f"vol{t}")
    for k, comp in enumerate(components):
        if comp.w_v:
            model.add_objective(P_max[k], -config.alpha_v * comp.w_v)
            model.add_objective(P_min[k], config.alpha_v * comp.w_v)

    for batch in changes:
        for e, expr in enumerate(batch):
            for i, coef in expr.terms:
                model.add_objective(i, config.alpha_c * case.switch_cost[e] * coef)
    model.add_objective(delta, config.alpha_n)
    add_dispatch_cost(model, case, p_g, beta, config.cost_segments)

    u = []
    if config.mode is SwitchingMode.AS:
        u = add_as_mode(model, case, changes, M.delta)
    add_switch_budget(model, changes, required, config.n_e)
    if config.necessary_only:
        add_necessary_only(model, z, changes, required, z_0, fixed_terminal=False)
    if batch_size_one:
        add_batch_size_one(model, changes, delta, exact=False)

    model.meta.update(
        kind="tetop", case=case, T_u=T_u, mode=config.mode, z_0=z_0, beta=beta,
        components=components, transitional=transitional, intermediate=intermediate,
        u=u, config=config,
    )
    logger.info(
        f"Built TETOP model T_u={T_u} mode={config.mode.value}: {model.n_vars} vars, "
        f"{model.n_constraints} constraints"
    )
    return model.seal()
