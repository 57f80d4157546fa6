"""Violation probability of intermediate topologies inside switching batches.

For each batch the variants are the topologies reached after applying a
proper subset of its switches. The estimate is the share of variants that
are disconnected or exceed relaxed limits, pooled over every batch of every
scenario.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from fastmcp.utilities.logging import get_logger

from toposhift.config import MonteCarloSettings
from toposhift.dcflow import topology_violation
from toposhift.grid import DEFAULT_ENUMERATION_CAP, GridCase, as_topology, intermediate_variants
from toposhift.trajectories import Trajectory

logger = get_logger(__name__)


class RhoMode(str, Enum):
    EXHAUSTIVE = "exhaustive"
    SAMPLE = "sample"


@dataclass(frozen=True)
class Scenario:
    """A solved trajectory with the generation it was planned under."""

    id: str
    trajectory: Trajectory
    p_g: np.ndarray


@dataclass(frozen=True)
class BatchRho:
    scenario: str
    t: int
    variants: int
    violations: float
    checked: int

    @property
    def rho(self) -> float:
        return self.violations / self.checked if self.checked else 0.0


@dataclass
class RhoResult:
    rho: float
    numerator: float
    denominator: int
    no_intermediates: bool
    standard_error: float | None
    mode: RhoMode
    rows: list[BatchRho] = field(default_factory=list)


def _violates(case: GridCase, z: np.ndarray, p_g: np.ndarray) -> bool:
    report = topology_violation(case, z, p_g, relaxed=True)
    return report is None or not report.ok


def _exhaustive_batch(case, scenario, t, z_prev, z_next, cap) -> BatchRho:
    variants = intermediate_variants(z_prev, z_next, cap)
    if len(variants) <= 1:
        return BatchRho(scenario.id, t, 0, 0.0, 0)
    bad = sum(_violates(case, z_prev + delta, scenario.p_g) for delta in variants)
    return BatchRho(scenario.id, t, len(variants), float(bad), len(variants))


def _sampled_batch(case, scenario, t, z_prev, z_next, samples, rng) -> BatchRho:
    x = z_next - z_prev
    support = np.flatnonzero(x)
    k = support.size
    if k <= 1:
        return BatchRho(scenario.id, t, 0, 0.0, 0)
    cache: dict[bytes, bool] = {}
    bits = rng.integers(0, 2, size=(samples, k))
    full = bits.all(axis=1)
    while full.any():
        bits[full] = rng.integers(0, 2, size=(int(full.sum()), k))
        full = bits.all(axis=1)
    bad = 0
    for row in bits:
        key = row.tobytes()
        if key not in cache:
            z = z_prev.copy()
            z[support[row == 1]] += x[support[row == 1]]
            cache[key] = _violates(case, z, scenario.p_g)
        bad += cache[key]
    return BatchRho(scenario.id, t, 2**k - 1, float(bad), samples)


def rho_probability(
    case: GridCase,
    scenarios: list[Scenario],
    mode: RhoMode = RhoMode.EXHAUSTIVE,
    settings: MonteCarloSettings | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
    workers: int = 1,
) -> RhoResult:
    """Pooled violation probability over every batch of every scenario.

    A single-switch batch has no intermediate topology and contributes
    nothing. With no intermediates at all the ratio is 0/0 and is reported
    as 0 with ``no_intermediates`` set. Sampling draws ``samples`` proper
    subsets per batch uniformly with a fixed seed and reports a binomial
    standard error.

    Raises:
        EnumerationTooLargeError: In exhaustive mode when a batch exceeds ``cap``.
    """
    mode = RhoMode(mode)
    settings = settings or MonteCarloSettings()
    start = time.perf_counter()
    logger.info(f"Estimating rho over {len(scenarios)} scenarios ({mode.value})")
    jobs = []
    for scenario in scenarios:
        topologies = [as_topology(case, z) for z in scenario.trajectory.arrays()]
        for t in range(1, len(topologies)):
            jobs.append((scenario, t, topologies[t - 1], topologies[t]))

    if mode is RhoMode.EXHAUSTIVE:
        # Fails fast before any flow is solved.
        for _, _, z_prev, z_next in jobs:
            intermediate_variants(z_prev, z_next, cap)

        def run(job):
            return _exhaustive_batch(case, *job, cap)

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                rows = list(pool.map(run, jobs))
        else:
            rows = [run(job) for job in jobs]
    else:
        rng = np.random.default_rng(settings.seed)
        rows = [_sampled_batch(case, *job, settings.samples, rng) for job in jobs]

    denominator = sum(r.variants for r in rows)
    # Sampled rows scale their hit rate to the whole variant set.
    numerator = float(sum(r.variants * r.rho for r in rows))
    rho = numerator / denominator if denominator else 0.0
    standard_error = None
    if mode is RhoMode.SAMPLE and denominator:
        variance = sum(
            r.variants**2 * r.rho * (1 - r.rho) / r.checked for r in rows if r.checked
        )
        standard_error = math.sqrt(variance) / denominator
    logger.debug(f"rho estimated in {(time.perf_counter() - start) * 1000:.1f}ms")
    return RhoResult(
        rho=rho,
        numerator=numerator,
        denominator=denominator,
        no_intermediates=denominator == 0,
        standard_error=standard_error,
        mode=mode,
        rows=rows,
    )
