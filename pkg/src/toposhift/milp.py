"""Mixed-integer linear programs: model representation, LP relaxation,
branch-and-bound and a brute-force oracle.

LP relaxations are solved with HiGHS through ``scipy.optimize.linprog``.
Branch-and-bound is implemented here so that node order, branching and
incumbent handling are deterministic.
"""

import heapq
import itertools
import time
from collections.abc import Iterable, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
from fastmcp.utilities.logging import get_logger
from scipy.optimize import linprog

from toposhift.config import SolverSettings
from toposhift.errors import ModelError, TooManyBinariesError, WarmStartError

logger = get_logger(__name__)

# Gap below which a finished search is reported as optimal.
OPTIMALITY_GAP = 1e-6
WARM_START_TOL = 1e-6


class VarKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class Sense(str, Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    GAP_LIMIT = "gap-limit"
    NODE_LIMIT = "node-limit"


@dataclass(frozen=True)
class Constraint:
    indices: np.ndarray
    coefs: np.ndarray
    sense: Sense
    rhs: float
    name: str


@dataclass(frozen=True)
class SolveOutcome:
    """Result of an LP, branch-and-bound or brute-force solve."""

    status: SolveStatus
    assignment: np.ndarray | None
    objective: float | None
    bound: float | None
    nodes: int
    wall_time: float

    @property
    def has_solution(self) -> bool:
        return self.assignment is not None

    @property
    def gap(self) -> float | None:
        if self.objective is None or self.bound is None:
            return None
        return abs(self.objective - self.bound) / max(1.0, abs(self.objective))


Terms = Mapping[int, float] | Iterable[tuple[int, float]]


# =============================================================================
# Model
# =============================================================================


class MilpModel:
    """Minimization MILP built incrementally, then sealed for solving.

    Variables are referenced by integer index. ``tags`` map formulation roles
    (``"z/1"``, ``"delta"`` ...) to index arrays so solutions can be decoded.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self.offset = 0.0
        self.tags: dict[str, np.ndarray] = {}
        self.meta: dict[str, object] = {}
        self._names: list[str] = []
        self._kinds: list[VarKind] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._constraints: list[Constraint] = []
        self._objective: dict[int, float] = {}
        self._quadratic: dict[tuple[int, int], float] = {}
        self._sealed = False

    # -- construction -------------------------------------------------------

    def _check_open(self) -> None:
        if self._sealed:
            raise ModelError(f"model {self.name!r} is sealed")

    def add_var(
        self,
        name: str,
        kind: VarKind = VarKind.CONTINUOUS,
        lb: float = 0.0,
        ub: float = np.inf,
    ) -> int:
        self._check_open()
        if kind is VarKind.BINARY:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if lb > ub:
            raise ModelError(f"variable {name}: lower bound {lb} above upper bound {ub}")
        self._names.append(name)
        self._kinds.append(kind)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        return len(self._names) - 1

    def add_vars(
        self,
        prefix: str,
        n: int,
        kind: VarKind = VarKind.CONTINUOUS,
        lb=0.0,
        ub=np.inf,
        tag: str | None = None,
    ) -> np.ndarray:
        """Add ``n`` variables named ``prefix[i]``; bounds may be scalars or arrays."""
        lbs = np.broadcast_to(np.asarray(lb, dtype=float), (n,))
        ubs = np.broadcast_to(np.asarray(ub, dtype=float), (n,))
        idx = np.array(
            [self.add_var(f"{prefix}[{i}]", kind, lbs[i], ubs[i]) for i in range(n)],
            dtype=int,
        )
        if tag is not None:
            self.tag(tag, idx)
        return idx

    def tag(self, name: str, idx) -> None:
        self.tags[name] = np.asarray(idx, dtype=int)

    def group(self, name: str) -> np.ndarray:
        try:
            return self.tags[name]
        except KeyError:
            raise ModelError(f"model {self.name!r} has no variable group {name!r}") from None

    def has_group(self, name: str) -> bool:
        return name in self.tags

    def add_constraint(
        self, terms: Terms, sense: Sense | str, rhs: float, name: str | None = None
    ) -> None:
        self._check_open()
        items = terms.items() if isinstance(terms, Mapping) else terms
        pairs = [(int(i), float(c)) for i, c in items]
        n = len(self._names)
        for i, _ in pairs:
            if not 0 <= i < n:
                raise ModelError(f"constraint references undeclared variable {i}")
        indices = np.array([i for i, _ in pairs], dtype=int)
        coefs = np.array([c for _, c in pairs], dtype=float)
        self._constraints.append(
            Constraint(
                indices=indices,
                coefs=coefs,
                sense=Sense(sense),
                rhs=float(rhs),
                name=name or f"c{len(self._constraints)}",
            )
        )

    def add_objective(self, idx, coef) -> None:
        """Accumulate linear objective coefficients."""
        self._check_open()
        for i, c in zip(np.atleast_1d(idx), np.broadcast_to(coef, np.shape(np.atleast_1d(idx)))):
            if c:
                self._objective[int(i)] = self._objective.get(int(i), 0.0) + float(c)

    def add_quadratic_objective(self, i: int, j: int, coef: float) -> None:
        """Quadratic term ``coef * x_i * x_j``; exported to MPS only, never solved here."""
        self._check_open()
        key = (min(i, j), max(i, j))
        self._quadratic[key] = self._quadratic.get(key, 0.0) + float(coef)

    def fix(self, idx, values) -> None:
        """Fix variables by collapsing their bounds."""
        self._check_open()
        for i, v in zip(np.atleast_1d(idx), np.broadcast_to(values, np.shape(np.atleast_1d(idx)))):
            self._lb[int(i)] = self._ub[int(i)] = float(v)

    def seal(self) -> "MilpModel":
        """Freeze the model and build the solver arrays."""
        if self._sealed:
            return self
        n = len(self._names)
        self.c = np.zeros(n)
        for i, coef in self._objective.items():
            self.c[i] = coef
        self.lb = np.array(self._lb)
        self.ub = np.array(self._ub)
        self.binary = np.array([k is VarKind.BINARY for k in self._kinds], dtype=bool)

        ub_rows, eq_rows = [], []
        for con in self._constraints:
            if con.sense is Sense.EQ:
                eq_rows.append((con.indices, con.coefs, con.rhs))
            elif con.sense is Sense.LE:
                ub_rows.append((con.indices, con.coefs, con.rhs))
            else:
                ub_rows.append((con.indices, -con.coefs, -con.rhs))
        self.A_ub, self.b_ub = _stack(ub_rows, n)
        self.A_eq, self.b_eq = _stack(eq_rows, n)
        self._sealed = True
        logger.debug(
            f"Sealed {self.name}: {n} vars ({int(self.binary.sum())} binary), "
            f"{len(self._constraints)} constraints"
        )
        return self

    # -- inspection ---------------------------------------------------------

    @property
    def sealed(self) -> bool:
        return self._sealed

    @property
    def n_vars(self) -> int:
        return len(self._names)

    @property
    def n_constraints(self) -> int:
        return len(self._constraints)

    @property
    def names(self) -> list[str]:
        return list(self._names)

    @property
    def kinds(self) -> list[VarKind]:
        return list(self._kinds)

    @property
    def bounds(self) -> tuple[list[float], list[float]]:
        return list(self._lb), list(self._ub)

    @property
    def constraints(self) -> list[Constraint]:
        return list(self._constraints)

    @property
    def objective_terms(self) -> dict[int, float]:
        return dict(self._objective)

    @property
    def quadratic_terms(self) -> dict[tuple[int, int], float]:
        return dict(self._quadratic)

    def free_binaries(self) -> np.ndarray:
        self._require_sealed()
        return np.flatnonzero(self.binary & (self.lb < self.ub))

    def _require_sealed(self) -> None:
        if not self._sealed:
            raise ModelError(f"model {self.name!r} must be sealed before solving")

    def objective_value(self, x: np.ndarray) -> float:
        self._require_sealed()
        return float(self.c @ x) + self.offset

    def max_violation(self, x: np.ndarray) -> float:
        """Largest bound, row or integrality violation of assignment ``x``."""
        self._require_sealed()
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_vars,):
            raise ModelError(f"assignment has {x.size} entries, model has {self.n_vars}")
        worst = max(
            float(np.max(self.lb - x, initial=0.0)),
            float(np.max(x - self.ub, initial=0.0)),
        )
        if self.A_ub.shape[0]:
            worst = max(worst, float(np.max(self.A_ub @ x - self.b_ub, initial=0.0)))
        if self.A_eq.shape[0]:
            worst = max(worst, float(np.max(np.abs(self.A_eq @ x - self.b_eq), initial=0.0)))
        if self.binary.any():
            xb = x[self.binary]
            worst = max(worst, float(np.max(np.abs(xb - np.round(xb)), initial=0.0)))
        return worst


def _stack(rows, n: int) -> tuple[sp.csr_matrix, np.ndarray]:
    if not rows:
        return sp.csr_matrix((0, n)), np.zeros(0)
    data, ri, ci, rhs = [], [], [], []
    for r, (indices, coefs, b) in enumerate(rows):
        data.extend(coefs)
        ci.extend(indices)
        ri.extend([r] * len(indices))
        rhs.append(b)
    # Duplicate entries are summed.
    A = sp.coo_matrix((data, (ri, ci)), shape=(len(rows), n)).tocsr()
    return A, np.array(rhs, dtype=float)


# =============================================================================
# LP
# =============================================================================


@dataclass(frozen=True)
class _LpResult:
    status: SolveStatus
    x: np.ndarray | None
    value: float | None


def _solve_relaxation(
    model: MilpModel,
    lb: np.ndarray,
    ub: np.ndarray,
    settings: SolverSettings,
) -> _LpResult:
    options = {
        "primal_feasibility_tolerance": settings.feasibility_tol,
        "dual_feasibility_tolerance": settings.feasibility_tol,
    }
    res = linprog(
        model.c,
        A_ub=model.A_ub if model.A_ub.shape[0] else None,
        b_ub=model.b_ub if model.A_ub.shape[0] else None,
        A_eq=model.A_eq if model.A_eq.shape[0] else None,
        b_eq=model.b_eq if model.A_eq.shape[0] else None,
        bounds=np.column_stack((lb, ub)),
        method="highs",
        options=options,
    )
    if res.status == 0:
        return _LpResult(SolveStatus.OPTIMAL, res.x, float(res.fun))
    if res.status == 3:
        return _LpResult(SolveStatus.UNBOUNDED, None, None)
    if res.status != 2:
        logger.warning(f"LP solve of {model.name} ended with status {res.status}: {res.message}")
    return _LpResult(SolveStatus.INFEASIBLE, None, None)


def solve_lp(model: MilpModel, settings: SolverSettings | None = None) -> SolveOutcome:
    """Solve the LP relaxation (binaries relaxed to [0, 1])."""
    model._require_sealed()
    settings = settings or SolverSettings()
    start = time.perf_counter()
    res = _solve_relaxation(model, model.lb, model.ub, settings)
    elapsed = time.perf_counter() - start
    objective = None if res.value is None else res.value + model.offset
    return SolveOutcome(
        status=res.status,
        assignment=res.x,
        objective=objective,
        bound=objective,
        nodes=1,
        wall_time=elapsed,
    )


def complete_assignment(
    model: MilpModel,
    fixed: Mapping[int, float],
    settings: SolverSettings | None = None,
) -> np.ndarray | None:
    """Fix the given variables and solve the LP for the rest.

    Returns the completed assignment, or None when the fixed values admit
    no feasible completion.
    """
    model._require_sealed()
    settings = settings or SolverSettings()
    lb, ub = model.lb.copy(), model.ub.copy()
    for i, v in fixed.items():
        if v < model.lb[i] - WARM_START_TOL or v > model.ub[i] + WARM_START_TOL:
            return None
        lb[i] = ub[i] = v
    res = _solve_relaxation(model, lb, ub, settings)
    return res.x if res.status is SolveStatus.OPTIMAL else None


# =============================================================================
# Branch and Bound
# =============================================================================


def _most_fractional(x: np.ndarray, binaries: np.ndarray, tol: float) -> int | None:
    """Binary with fractional part closest to 0.5; ties go to the lowest index."""
    if binaries.size == 0:
        return None
    frac = np.abs(x[binaries] - np.round(x[binaries]))
    if np.max(frac) <= tol:
        return None
    return int(binaries[int(np.argmax(frac))])


def _polish(
    model: MilpModel, x: np.ndarray, settings: SolverSettings
) -> tuple[np.ndarray, float]:
    """Round binaries, re-solve the LP with them fixed, and fall back to ``x``."""
    rounded = {int(i): float(round(x[i])) for i in np.flatnonzero(model.binary)}
    polished = complete_assignment(model, rounded, settings)
    if polished is None:
        return x, float(model.c @ x)
    return polished, float(model.c @ polished)


def solve_bb(
    model: MilpModel,
    warm_start: np.ndarray | None = None,
    gap: float | None = None,
    settings: SolverSettings | None = None,
) -> SolveOutcome:
    """Best-bound branch-and-bound on the binaries of ``model``.

    Branches on the most fractional binary (lowest index on ties), down
    branch first. With one worker the search is fully deterministic.

    Raises:
        WarmStartError: If ``warm_start`` violates the model by more than 1e-6.
    """
    model._require_sealed()
    settings = settings or SolverSettings()
    gap = settings.gap if gap is None else gap
    start = time.perf_counter()
    binaries = np.flatnonzero(model.binary)

    incumbent: np.ndarray | None = None
    inc_value = np.inf
    if warm_start is not None:
        warm_start = np.asarray(warm_start, dtype=float)
        violation = model.max_violation(warm_start)
        if violation > WARM_START_TOL:
            raise WarmStartError(
                f"warm start violates model {model.name!r} by {violation:.3e}"
            )
        incumbent = warm_start.copy()
        inc_value = float(model.c @ incumbent)
        logger.debug(f"Warm start accepted with objective {inc_value + model.offset:.6g}")

    def tolerance(value: float) -> float:
        return gap * max(1.0, abs(value))

    def outcome(status: SolveStatus, bound: float | None, nodes: int) -> SolveOutcome:
        elapsed = time.perf_counter() - start
        objective = None if incumbent is None else inc_value + model.offset
        if bound is not None:
            bound += model.offset
        logger.info(
            f"B&B {model.name}: {status.value}, objective={objective}, "
            f"nodes={nodes}, {elapsed * 1000:.1f}ms"
        )
        return SolveOutcome(status, incumbent, objective, bound, nodes, elapsed)

    root = _solve_relaxation(model, model.lb, model.ub, settings)
    nodes = 1
    if root.status is SolveStatus.UNBOUNDED:
        return outcome(SolveStatus.UNBOUNDED, None, nodes)
    if root.status is SolveStatus.INFEASIBLE:
        return outcome(SolveStatus.INFEASIBLE, None, nodes)

    counter = itertools.count()
    heap: list = [(root.value, next(counter), model.lb.copy(), model.ub.copy(), root.x)]
    executor = ThreadPoolExecutor(settings.workers) if settings.workers > 1 else None
    lp_map = executor.map if executor else map

    pruned_bound = None
    try:
        while heap:
            lower = heap[0][0]
            if incumbent is not None and lower >= inc_value - tolerance(inc_value):
                pruned_bound = lower
                heap.clear()
                break
            if nodes >= settings.node_limit or (
                settings.time_limit is not None
                and time.perf_counter() - start > settings.time_limit
            ):
                logger.warning(f"B&B {model.name}: search limit reached after {nodes} nodes")
                return outcome(SolveStatus.NODE_LIMIT, lower, nodes)

            batch = [heapq.heappop(heap) for _ in range(min(settings.workers, len(heap)))]
            children = []
            for value, _, lb, ub, x in batch:
                if incumbent is not None and value >= inc_value - tolerance(inc_value):
                    continue
                j = _most_fractional(x, binaries, settings.integrality_tol)
                if j is None:
                    candidate, cand_value = _polish(model, x, settings)
                    if cand_value < inc_value:
                        incumbent, inc_value = candidate, cand_value
                        logger.debug(f"New incumbent {inc_value + model.offset:.9g} at node {nodes}")
                    continue
                for fixed in (0.0, 1.0):
                    child_lb, child_ub = lb.copy(), ub.copy()
                    child_lb[j] = child_ub[j] = fixed
                    children.append((child_lb, child_ub))

            results = list(
                lp_map(lambda b: _solve_relaxation(model, b[0], b[1], settings), children)
            )
            nodes += len(children)
            for (child_lb, child_ub), res in zip(children, results):
                if res.status is not SolveStatus.OPTIMAL:
                    continue
                if incumbent is not None and res.value >= inc_value - tolerance(inc_value):
                    continue
                heapq.heappush(heap, (res.value, next(counter), child_lb, child_ub, res.x))
    finally:
        if executor:
            executor.shutdown()

    if incumbent is None:
        return outcome(SolveStatus.INFEASIBLE, None, nodes)
    bound = inc_value if pruned_bound is None else min(inc_value, pruned_bound)
    status = SolveStatus.OPTIMAL if gap <= OPTIMALITY_GAP else SolveStatus.GAP_LIMIT
    if status is SolveStatus.GAP_LIMIT and bound >= inc_value - OPTIMALITY_GAP * max(1.0, abs(inc_value)):
        status = SolveStatus.OPTIMAL
    return outcome(status, bound, nodes)


# =============================================================================
# Brute Force
# =============================================================================


def brute_force_binary(
    model: MilpModel, settings: SolverSettings | None = None
) -> SolveOutcome:
    """Enumerate every assignment of the free binaries and solve each LP.

    Raises:
        TooManyBinariesError: If the model has more free binaries than the cap.
    """
    model._require_sealed()
    settings = settings or SolverSettings()
    free = model.free_binaries()
    if free.size > settings.brute_force_cap:
        raise TooManyBinariesError(
            f"{free.size} free binaries exceed the brute-force cap {settings.brute_force_cap}"
        )
    start = time.perf_counter()
    best_x, best_value = None, np.inf
    nodes = 0
    for values in itertools.product((0.0, 1.0), repeat=free.size):
        lb, ub = model.lb.copy(), model.ub.copy()
        lb[free] = ub[free] = values
        res = _solve_relaxation(model, lb, ub, settings)
        nodes += 1
        if res.status is SolveStatus.UNBOUNDED:
            return SolveOutcome(
                SolveStatus.UNBOUNDED, None, None, None, nodes, time.perf_counter() - start
            )
        if res.status is SolveStatus.OPTIMAL and res.value < best_value:
            best_x, best_value = res.x, res.value
    elapsed = time.perf_counter() - start
    if best_x is None:
        return SolveOutcome(SolveStatus.INFEASIBLE, None, None, None, nodes, elapsed)
    objective = best_value + model.offset
    return SolveOutcome(SolveStatus.OPTIMAL, best_x, objective, objective, nodes, elapsed)
