"""Solve workflows: the progressive-horizon transition loop, direct solves and
the OTS / OTT / TETOP comparison."""

import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel

from toposhift.config import (
    WEIGHT_SEPARATION,
    DriverSettings,
    OttConfig,
    SolverSettings,
    SwitchingMode,
)
from toposhift.dcflow import Condition4Mode, dispatch_cost
from toposhift.errors import InfeasibleError, LimitReachedError, WarmStartError
from toposhift.formulations import OttDecision, build_dc_ots, build_ott, build_tetop
from toposhift.grid import GridCase, as_topology, changed_agents, intersection_topology, is_connected
from toposhift.milp import MilpModel, SolveOutcome, SolveStatus, solve_bb
from toposhift.trajectories import (
    MetricReport,
    Trajectory,
    adhoc_asy,
    adhoc_syn,
    decode,
    encode,
    model_slack_total,
    validate_trajectory,
)

logger = get_logger(__name__)

SLACK_TOL = 1e-7


# =============================================================================
# Horizon Bounds
# =============================================================================


def compute_T_lower(case: GridCase, z_0, z_T, mode: SwitchingMode = SwitchingMode.SS) -> int:
    """Smallest horizon worth trying.

    SS: 1 when the intersection of the endpoints is connected, else 2.
    AS: the number of agents owning a changed branch. Identical endpoints
    give 1.
    """
    z_0 = as_topology(case, z_0)
    z_T = as_topology(case, z_T)
    if np.array_equal(z_0, z_T):
        return 1
    if SwitchingMode(mode) is SwitchingMode.AS:
        return max(len(changed_agents(case, z_0, z_T)), 1)
    return 1 if is_connected(case, intersection_topology(z_0, z_T)) else 2


# =============================================================================
# Single Solves
# =============================================================================


def _solve(
    model: MilpModel,
    settings: SolverSettings,
    warm_start: np.ndarray | None = None,
) -> SolveOutcome:
    """Branch-and-bound solve; a warm start that does not fit the model raises.

    Raises:
        WarmStartError: If ``warm_start`` violates the model.
        LimitReachedError: If the search stops without any solution.
    """
    outcome = solve_bb(model, warm_start=warm_start, settings=settings)
    if outcome.status is SolveStatus.NODE_LIMIT and not outcome.has_solution:
        raise LimitReachedError(f"search limit reached on {model.name} without a solution")
    return outcome


def solve_direct(
    case: GridCase,
    z_0,
    z_T,
    p_g,
    config: OttConfig,
    settings: SolverSettings | None = None,
    warm_start: Trajectory | None = None,
) -> tuple[Trajectory, OttDecision]:
    """Solve the transition model once at the configured horizon.

    Raises:
        InfeasibleError: If the model has no feasible trajectory.
        LimitReachedError: If the search stops without any solution.
        WarmStartError: If ``warm_start`` cannot be encoded as a model solution.
    """
    settings = settings or SolverSettings()
    logger.info(f"Direct OTT solve at T_u={config.T_u}")
    model = build_ott(case, z_0, z_T, p_g, config)
    warm = None
    if warm_start is not None:
        warm = encode(model, warm_start, settings)
        if warm is None:
            raise WarmStartError(f"warm start with {warm_start.T} batches does not fit {model.name!r}")
    outcome = _solve(model, settings, warm)
    if not outcome.has_solution:
        raise InfeasibleError("infeasible")
    return decode(outcome, model)


def optimize_one(
    case: GridCase,
    z_0,
    z_T,
    p_g,
    config: OttConfig,
    settings: SolverSettings | None = None,
) -> tuple[Trajectory, OttDecision]:
    """Best ordering of single-switch batches (horizon ``|z_0 - z_T|``)."""
    z_0 = as_topology(case, z_0)
    z_T = as_topology(case, z_T)
    settings = settings or SolverSettings()
    horizon = max(int(np.abs(z_0 - z_T).sum()), 1)
    exact = not np.array_equal(z_0, z_T)
    cfg = config.model_copy(update={"T_u": horizon, "mode": SwitchingMode.SS})
    model = build_ott(case, z_0, z_T, p_g, cfg, batch_size_one=exact)
    outcome = _solve(model, settings)
    if not outcome.has_solution:
        raise InfeasibleError("infeasible")
    return decode(outcome, model)


# =============================================================================
# Progressive Horizon
# =============================================================================


@dataclass
class Algorithm1Result:
    trajectory: Trajectory
    decision: OttDecision
    slack_total: float
    nodes: int
    iterations: list[dict] = field(default_factory=list)
    # Slack left by the necessary-switching-only pass; positive marks a critical scenario.
    necessary_slack: float | None = None

    @property
    def objective(self) -> float | None:
        return self.decision.objective


def _best_seed(
    model: MilpModel,
    seeds: list[Trajectory],
    settings: SolverSettings,
    T_max: int | None = None,
) -> np.ndarray | None:
    """Lowest-objective encodable seed with at most ``T_max`` batches.

    ``T_max`` is the previous decoded horizon; seeds never exceed the model
    horizon either.
    """
    limit = model.meta["T_u"] if T_max is None else min(T_max, model.meta["T_u"])
    best, best_value = None, math.inf
    for traj in seeds:
        if traj.T > limit:
            continue
        x = encode(model, traj, settings)
        if x is None:
            continue
        value = model.objective_value(x)
        if value < best_value:
            best, best_value = x, value
    return best


def _horizon_search(
    build: Callable[[int, bool], MilpModel],
    T_l: int,
    seeds: list[Trajectory],
    settings: SolverSettings,
    driver: DriverSettings,
    label: str,
) -> Algorithm1Result:
    """Grow the horizon from ``T_l`` until the decoded batch count repeats.

    The first pass restricts switching to the necessary actions; a second,
    unrestricted pass runs only if the first ends with slack or without any
    solution. Every decoded incumbent joins ``seeds``.
    """
    nodes = 0
    iterations: list[dict] = []
    result: Algorithm1Result | None = None
    necessary_slack = None
    for necessary_only in (True, False):
        T_u = T_l
        previous_T = None
        stable = None
        for k in range(driver.iteration_cap):
            model = build(T_u, necessary_only)
            start = time.perf_counter()
            record = dict(phase=1 if necessary_only else 2, T_u=T_u)
            seed = _best_seed(model, seeds, settings, previous_T)
            try:
                outcome = _solve(model, settings, seed)
            except WarmStartError as e:
                logger.warning(f"{label} iteration {k + 1}: warm start rejected, solving cold: {e}")
                record["warm_start_error"] = str(e)
                outcome = _solve(model, settings)
            nodes += outcome.nodes
            record.update(status=outcome.status.value, objective=outcome.objective, nodes=outcome.nodes)
            iterations.append(record)
            logger.info(
                f"{label} iteration {k + 1}: T_u={T_u}, {outcome.status.value}, "
                f"objective={outcome.objective}"
            )
            logger.debug(f"Iteration solved in {(time.perf_counter() - start) * 1000:.1f}ms")
            if not outcome.has_solution:
                T_u += driver.horizon_step
                continue
            traj, decision = decode(outcome, model)
            record["T"] = traj.T
            seeds.append(traj)
            stable = Algorithm1Result(
                trajectory=traj,
                decision=decision,
                slack_total=model_slack_total(model, outcome.assignment),
                nodes=nodes,
                iterations=iterations,
            )
            if previous_T is not None and traj.T == previous_T:
                break
            previous_T = traj.T
            T_u += driver.horizon_step
        else:
            logger.warning(f"{label} reached the iteration cap of {driver.iteration_cap}")

        if stable is not None:
            result = stable
            if necessary_only:
                necessary_slack = stable.slack_total
            if stable.slack_total <= SLACK_TOL:
                break
    if result is None:
        raise InfeasibleError("infeasible")
    result.nodes = nodes
    result.necessary_slack = necessary_slack
    return result


def algorithm1(
    case: GridCase,
    z_0,
    z_T,
    p_g,
    config: OttConfig,
    settings: SolverSettings | None = None,
    driver: DriverSettings | None = None,
) -> Algorithm1Result:
    """Progressive-horizon transition search.

    The feasible set is seeded with the ad hoc trajectory of the switching
    mode. A first pass restricts every branch to its necessary switching
    actions; the horizon starts at the lower bound and grows by
    ``horizon_step`` until the decoded batch count repeats. If the result
    still uses slack, the loop is repeated without the restriction.

    Raises:
        InfeasibleError: If neither pass finds a feasible trajectory.
        LimitReachedError: If a solve stops without any solution.
    """
    settings = settings or SolverSettings()
    driver = driver or DriverSettings()
    z_0 = as_topology(case, z_0)
    z_T = as_topology(case, z_T)
    if config.mode is SwitchingMode.AS:
        seeds = [adhoc_asy(case, z_0, z_T)]
    else:
        seeds = [adhoc_syn(z_0, z_T)]
    T_l = compute_T_lower(case, z_0, z_T, config.mode)
    logger.info(f"Algorithm 1: T_l={T_l}, mode={config.mode.value}")

    def build(T_u: int, necessary_only: bool) -> MilpModel:
        cfg = config.model_copy(update={"T_u": T_u, "necessary_only": necessary_only})
        return build_ott(case, z_0, z_T, p_g, cfg)

    return _horizon_search(build, T_l, seeds, settings, driver, "Algorithm 1")


def tetop_algorithm1(
    case: GridCase,
    z_0,
    config: OttConfig,
    beta: float,
    n_s: int,
    n_s_min: int = 0,
    settings: SolverSettings | None = None,
    driver: DriverSettings | None = None,
    batch_size_one: bool = False,
) -> Algorithm1Result:
    """Progressive-horizon search over the transition-embedded model.

    Same loop as :func:`algorithm1` with an empty initial feasible set. The
    terminal topology is free, so the horizon starts at one batch.

    Raises:
        ConfigError: If ``beta`` is below ``1e3 * alpha_c``.
        InfeasibleError: If no horizon within the iteration cap admits a solution.
        LimitReachedError: If a solve stops without any solution.
    """
    settings = settings or SolverSettings()
    driver = driver or DriverSettings()
    z_0 = as_topology(case, z_0)
    logger.info(f"TETOP search: n_s={n_s}, mode={config.mode.value}, batch_size_one={batch_size_one}")

    def build(T_u: int, necessary_only: bool) -> MilpModel:
        cfg = config.model_copy(update={"T_u": T_u, "necessary_only": necessary_only})
        return build_tetop(case, z_0, cfg, beta, n_s, n_s_min, batch_size_one=batch_size_one)

    return _horizon_search(build, 1, [], settings, driver, "TETOP")


# =============================================================================
# Model Comparison
# =============================================================================


class ModelResult(BaseModel):
    status: str
    terminal: list[int] | None = None
    dispatch_cost: float | None = None
    r_f: float | None = None
    report: MetricReport | None = None
    trajectory: Trajectory | None = None


class ComparisonRecord(BaseModel):
    """OTS optimum followed by the three transition models."""

    ots_terminal: list[int]
    ots_p_g: list[float]
    ots_cost: float
    model1: ModelResult
    model2: ModelResult
    model3: ModelResult

    @property
    def critical(self) -> bool:
        return self.model1.report is not None and self.model1.report.H_p > 0


def cost_change(cost: float, reference: float) -> float:
    """Relative dispatch cost change ``(cost - reference) / reference``."""
    if reference == 0:
        return 0.0 if cost == 0 else math.inf
    return (cost - reference) / reference


def solve_ots(
    case: GridCase,
    n_s: int,
    n_s_min: int = 0,
    z_0=None,
    config: OttConfig | None = None,
    settings: SolverSettings | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Terminal topology, dispatch and exact dispatch cost of the OTS optimum.

    Raises:
        InfeasibleError: If no topology within budget is feasible.
    """
    settings = settings or SolverSettings()
    logger.info(f"Solving OTS with n_s={n_s}, n_s_min={n_s_min}")
    model = build_dc_ots(case, n_s, n_s_min, z_0, config)
    outcome = _solve(model, settings)
    if not outcome.has_solution:
        raise InfeasibleError("infeasible")
    x = outcome.assignment
    z = np.round(x[model.group("z")]).astype(int)
    p_g = x[model.group("pg")]
    return z, p_g, dispatch_cost(case, p_g)


def _tetop_result(
    case: GridCase,
    z_0: np.ndarray,
    config: OttConfig,
    beta: float,
    n_s: int,
    n_s_min: int,
    reference: float,
    settings: SolverSettings,
    driver: DriverSettings,
    batch_size_one: bool,
) -> ModelResult:
    try:
        result = tetop_algorithm1(
            case, z_0, config, beta, n_s, n_s_min, settings, driver, batch_size_one=batch_size_one
        )
    except InfeasibleError:
        return ModelResult(status=SolveStatus.INFEASIBLE.value)
    traj, decision = result.trajectory, result.decision
    cost = dispatch_cost(case, decision.p_g)
    report = validate_trajectory(
        case, traj, decision.p_g, config, condition4=Condition4Mode.ASSUMPTION
    )
    return ModelResult(
        status=decision.status,
        terminal=decision.terminal.tolist(),
        dispatch_cost=cost,
        r_f=cost_change(cost, reference),
        report=report,
        trajectory=traj,
    )


def run_models_123(
    case: GridCase,
    z_0,
    config: OttConfig,
    n_s: int,
    n_s_min: int = 0,
    beta: float | None = None,
    settings: SolverSettings | None = None,
    driver: DriverSettings | None = None,
) -> ComparisonRecord:
    """Compare the OTS-then-transition approach with the transition-embedded one.

    Model 1 moves to the OTS optimum with the progressive-horizon loop;
    model 2 co-optimizes terminal topology and transition; model 3 does the
    same with at most one switch per batch. All use ``n_e = 0`` and the
    progressive horizon.
    """
    settings = settings or SolverSettings()
    driver = driver or DriverSettings()
    z_0 = as_topology(case, z_0)
    beta = WEIGHT_SEPARATION * config.alpha_c if beta is None else beta
    config = config.model_copy(update={"n_e": 0, "necessary_only": False})
    logger.info(f"Running model comparison with n_s={n_s}, beta={beta:.3g}")

    z_ots, p_ots, f1 = solve_ots(case, n_s, n_s_min, z_0, config, settings)
    alg = algorithm1(case, z_0, z_ots, p_ots, config, settings, driver)
    report1 = validate_trajectory(
        case, alg.trajectory, p_ots, config, condition4=Condition4Mode.ASSUMPTION
    )
    model1 = ModelResult(
        status=alg.decision.status,
        terminal=z_ots.tolist(),
        dispatch_cost=f1,
        r_f=0.0,
        report=report1,
        trajectory=alg.trajectory,
    )
    model2 = _tetop_result(case, z_0, config, beta, n_s, n_s_min, f1, settings, driver, False)
    model3 = _tetop_result(case, z_0, config, beta, n_s, n_s_min, f1, settings, driver, True)
    return ComparisonRecord(
        ots_terminal=z_ots.tolist(),
        ots_p_g=p_ots.tolist(),
        ots_cost=f1,
        model1=model1,
        model2=model2,
        model3=model3,
    )
