"""Network case data, topology algebra and the connectivity oracle."""

import json
from functools import cached_property
from pathlib import Path

import networkx as nx
import numpy as np
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from toposhift.errors import CaseError, EnumerationTooLargeError

logger = get_logger(__name__)

DEFAULT_ENUMERATION_CAP = 20


# =============================================================================
# Case Models
# =============================================================================


class Bus(BaseModel):
    """Bus with load, generator bounds and generation cost coefficients (per unit)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    id: int
    p_d: float = 0.0
    p_g_min: float = 0.0
    p_g_max: float = 0.0
    cost_linear: float = 0.0
    cost_quadratic: float = Field(default=0.0, ge=0)


class Branch(BaseModel):
    """Branch with DC parameters, normal and relaxed limits, and switching data."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    id: int
    from_bus: int = Field(alias="from")
    to_bus: int = Field(alias="to")
    b: float = Field(gt=0)
    p_max: float = Field(gt=0)
    p_max_relaxed: float
    theta_max: float = Field(gt=0)
    theta_max_relaxed: float
    switchable: bool = False
    switch_cost: float = Field(default=1.0, ge=0)
    in_service: bool = True

    @model_validator(mode="after")
    def _relaxed_dominates(self) -> "Branch":
        if self.from_bus == self.to_bus:
            raise ValueError(f"branch {self.id} connects bus {self.from_bus} to itself")
        if self.p_max_relaxed < self.p_max:
            raise ValueError(f"branch {self.id}: p_max_relaxed < p_max")
        if self.theta_max_relaxed < self.theta_max:
            raise ValueError(f"branch {self.id}: theta_max_relaxed < theta_max")
        return self


class GridCase(BaseModel):
    """Static network data: buses, branches, agent partition and reference bus."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    buses: list[Bus] = Field(min_length=1)
    branches: list[Branch]
    agents: list[list[int]] = Field(default_factory=list)
    reference_bus: int

    @model_validator(mode="after")
    def _check_references(self) -> "GridCase":
        bus_ids = [bus.id for bus in self.buses]
        if len(set(bus_ids)) != len(bus_ids):
            raise ValueError("duplicate bus id")
        branch_ids = [br.id for br in self.branches]
        if len(set(branch_ids)) != len(branch_ids):
            raise ValueError("duplicate branch id")
        known = set(bus_ids)
        if self.reference_bus not in known:
            raise ValueError(f"reference bus {self.reference_bus} is not a bus")
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise ValueError(f"branch {br.id} references an unknown bus")
        if self.agents:
            switchable = {br.id for br in self.branches if br.switchable}
            seen: set[int] = set()
            for members in self.agents:
                overlap = seen.intersection(members)
                if overlap:
                    raise ValueError(f"agent sets overlap on branches {sorted(overlap)}")
                seen.update(members)
            if seen != switchable:
                raise ValueError("agent sets must cover exactly the switchable branches")
        return self

    # Derived arrays. The model is frozen, so caching is safe.

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @cached_property
    def branch_index(self) -> dict[int, int]:
        return {br.id: k for k, br in enumerate(self.branches)}

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @cached_property
    def ref(self) -> int:
        return self.bus_index[self.reference_bus]

    @cached_property
    def ends(self) -> tuple[np.ndarray, np.ndarray]:
        src = np.array([self.bus_index[br.from_bus] for br in self.branches], dtype=int)
        dst = np.array([self.bus_index[br.to_bus] for br in self.branches], dtype=int)
        return src, dst

    def _branch_field(self, name: str) -> np.ndarray:
        return np.array([getattr(br, name) for br in self.branches], dtype=float)

    @cached_property
    def b(self) -> np.ndarray:
        return self._branch_field("b")

    @cached_property
    def p_max(self) -> np.ndarray:
        return self._branch_field("p_max")

    @cached_property
    def p_max_relaxed(self) -> np.ndarray:
        return self._branch_field("p_max_relaxed")

    @cached_property
    def theta_max(self) -> np.ndarray:
        return self._branch_field("theta_max")

    @cached_property
    def theta_max_relaxed(self) -> np.ndarray:
        return self._branch_field("theta_max_relaxed")

    @cached_property
    def switch_cost(self) -> np.ndarray:
        return self._branch_field("switch_cost")

    @cached_property
    def switchable(self) -> np.ndarray:
        return np.array([br.switchable for br in self.branches], dtype=bool)

    @cached_property
    def p_d(self) -> np.ndarray:
        return np.array([bus.p_d for bus in self.buses], dtype=float)

    @cached_property
    def p_g_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lower = np.array([bus.p_g_min for bus in self.buses], dtype=float)
        upper = np.array([bus.p_g_max for bus in self.buses], dtype=float)
        return lower, upper

    @cached_property
    def agent_masks(self) -> list[np.ndarray]:
        """One boolean branch mask per agent set, in partition order."""
        masks = []
        for members in self.agents:
            mask = np.zeros(self.n_branches, dtype=bool)
            mask[[self.branch_index[m] for m in members]] = True
            masks.append(mask)
        return masks

    @cached_property
    def diameter(self) -> int:
        """Hop diameter of the full branch graph (largest component if split)."""
        graph = _graph(self, np.ones(self.n_branches, dtype=int))
        component = max(nx.connected_components(graph), key=len)
        return nx.diameter(graph.subgraph(component)) if len(component) > 1 else 0

    def initial_topology(self) -> np.ndarray:
        """Branch statuses recorded in the case (``in_service``)."""
        z = np.array([int(br.in_service) for br in self.branches], dtype=int)
        z[~self.switchable] = 1
        return z

    def scaled(self, factor: float) -> "GridCase":
        """Copy of the case with every load multiplied by ``factor``."""
        buses = [bus.model_copy(update={"p_d": bus.p_d * factor}) for bus in self.buses]
        # Built fresh so no cached arrays carry over.
        return GridCase(
            buses=buses,
            branches=self.branches,
            agents=self.agents,
            reference_bus=self.reference_bus,
        )


def load_case(path: Path) -> GridCase:
    """Read a JSON case file.

    Raises:
        CaseError: If the file is not a valid case document.
        OSError: If the file cannot be read.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        return GridCase.model_validate(json.loads(text))
    except json.JSONDecodeError as e:
        raise CaseError(f"Case file {path} is not valid JSON: {e}") from e
    except ValidationError as e:
        raise CaseError(f"Invalid case {path}: {e}") from e


def as_topology(case: GridCase, z) -> np.ndarray:
    """Validate a branch-status vector against ``case`` and return it as int array.

    Raises:
        CaseError: On wrong length, non-binary entries, or an open unswitchable branch.
    """
    arr = np.asarray(z)
    if arr.shape != (case.n_branches,):
        raise CaseError(
            f"topology has length {arr.size}, case has {case.n_branches} branches"
        )
    if not np.all((arr == 0) | (arr == 1)):
        raise CaseError("topology entries must be 0 or 1")
    arr = arr.astype(int)
    closed_fixed = arr[~case.switchable]
    if np.any(closed_fixed != 1):
        raise CaseError("unswitchable branches must be switched on")
    return arr


# =============================================================================
# Topology Operations
# =============================================================================


def incidence_matrix(case: GridCase) -> np.ndarray:
    """Oriented incidence matrix: +1 at the from-bus, -1 at the to-bus of each branch."""
    E = np.zeros((case.n_buses, case.n_branches))
    src, dst = case.ends
    cols = np.arange(case.n_branches)
    E[src, cols] = 1.0
    E[dst, cols] = -1.0
    return E


def _graph(case: GridCase, z: np.ndarray) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(range(case.n_buses))
    src, dst = case.ends
    on = np.flatnonzero(z)
    graph.add_edges_from(zip(src[on].tolist(), dst[on].tolist()))
    return graph


def is_connected(case: GridCase, z) -> bool:
    """True iff the switched-on branches span every bus in one component."""
    z = np.asarray(z)
    if z.shape != (case.n_branches,):
        raise CaseError("topology length does not match the case")
    return nx.is_connected(_graph(case, z))


def intersection_topology(z_a, z_b) -> np.ndarray:
    """Component-wise product: the topology with every switched branch open."""
    a = np.asarray(z_a, dtype=int)
    b = np.asarray(z_b, dtype=int)
    if a.shape != b.shape:
        raise CaseError(f"topology lengths differ ({a.size} vs {b.size})")
    return a * b


def intermediate_variants(
    z_prev, z_next, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[np.ndarray]:
    """Switch-delta vectors applying a proper subset of the batch ``z_next - z_prev``.

    The zero vector is included and the full batch excluded, so a batch of
    ``k`` switches yields ``2**k - 1`` variants ordered by subset bitmask
    over the support in ascending branch order.

    Raises:
        EnumerationTooLargeError: If ``k`` exceeds ``cap``.
    """
    x = np.asarray(z_next, dtype=int) - np.asarray(z_prev, dtype=int)
    support = np.flatnonzero(x)
    k = support.size
    if k == 0:
        return []
    if k > cap:
        raise EnumerationTooLargeError(
            f"enumeration too large: batch of {k} switches exceeds cap {cap}"
        )
    variants = []
    for mask in range(2**k - 1):
        delta = np.zeros_like(x)
        for bit, e in enumerate(support):
            if mask >> bit & 1:
                delta[e] = x[e]
        variants.append(delta)
    return variants


def uniquely_balanced_vector(case: GridCase) -> np.ndarray:
    """Injection ``|V|-1`` at the reference bus and ``-1`` at every other bus."""
    c = -np.ones(case.n_buses)
    c[case.ref] = case.n_buses - 1
    return c


def changed_agents(case: GridCase, z_a, z_b) -> list[int]:
    """Indices of agent sets containing at least one branch that differs."""
    diff = np.asarray(z_a) != np.asarray(z_b)
    return [i for i, mask in enumerate(case.agent_masks) if np.any(diff & mask)]
