"""Scenario batches: topology changes along a load profile and their
transition statistics.

Each change of the OTS optimum between consecutive load levels becomes a
transition scenario. Scenarios are analysed in a process pool, each writing
its own JSON record; the records are merged into ``scenarios.csv`` and the
ratio statistics into ``metrics.csv``.
"""

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel

from toposhift.config import WEIGHT_SEPARATION, Settings, SwitchingMode
from toposhift.dcflow import Condition4Mode, dispatch_cost
from toposhift.driver import algorithm1, cost_change, optimize_one, solve_ots, tetop_algorithm1
from toposhift.errors import InfeasibleError, ToposhiftError
from toposhift.grid import GridCase
from toposhift.reports import rounded, write_csv
from toposhift.trajectories import adhoc_asy, adhoc_syn, validate_trajectory

logger = get_logger(__name__)

# Relative cost increase under which a transition-feasible optimum counts as cheap.
CHEAP_COST_CHANGE = 2e-3
HP_TOL = 1e-7


class TransitionScenario(BaseModel):
    id: str
    load_factor: float
    z_0: list[int]
    z_T: list[int]
    p_g: list[float]


def build_scenarios(
    case: GridCase,
    load_profile: list[float],
    n_s: int,
    n_s_min: int = 0,
    settings: Settings | None = None,
) -> list[TransitionScenario]:
    """Run OTS along the load profile, starting from the case's own topology.

    Every load level whose optimum differs from the previous one yields a
    scenario from the previous optimum to the new one.
    """
    settings = settings or Settings()
    z_prev = case.initial_topology()
    scenarios = []
    for k, factor in enumerate(load_profile):
        scaled = case.scaled(factor)
        try:
            z_opt, p_g, _ = solve_ots(scaled, n_s, n_s_min, z_prev, settings.ott, settings.solver)
        except ToposhiftError as e:
            logger.warning(f"OTS at load factor {factor} failed: {e}")
            continue
        if not np.array_equal(z_opt, z_prev):
            scenarios.append(
                TransitionScenario(
                    id=f"s{k:03d}",
                    load_factor=factor,
                    z_0=z_prev.tolist(),
                    z_T=z_opt.tolist(),
                    p_g=p_g.tolist(),
                )
            )
        z_prev = z_opt
    logger.info(f"Built {len(scenarios)} scenarios from {len(load_profile)} load levels")
    return scenarios


def _tetop_cost(case, z_0, config, beta, n_s, settings, batch_size_one) -> float | None:
    try:
        result = tetop_algorithm1(
            case, z_0, config, beta, n_s, 0, settings.solver, settings.driver, batch_size_one=batch_size_one
        )
    except InfeasibleError:
        return None
    return dispatch_cost(case, result.decision.p_g)


def analyse_scenario(
    case: GridCase,
    scenario: TransitionScenario,
    settings: Settings,
    n_s: int,
) -> dict:
    """Ad hoc and optimal transitions of one scenario in every available mode."""
    scaled = case.scaled(scenario.load_factor)
    z_0 = np.array(scenario.z_0)
    z_T = np.array(scenario.z_T)
    p_g = np.array(scenario.p_g)
    record: dict = {"id": scenario.id, "load_factor": scenario.load_factor}
    assumption = Condition4Mode.ASSUMPTION

    one_traj, _ = optimize_one(scaled, z_0, z_T, p_g, settings.ott, settings.solver)
    one = validate_trajectory(scaled, one_traj, p_g, settings.ott, condition4=assumption)
    record["one_H_p"] = one.H_p

    modes = [SwitchingMode.SS] + ([SwitchingMode.AS] if case.agents else [])
    f1 = dispatch_cost(scaled, p_g)
    beta = WEIGHT_SEPARATION * settings.ott.alpha_c
    for mode in modes:
        key = mode.value
        config = settings.ott.model_copy(update={"mode": mode})
        adhoc = adhoc_syn(z_0, z_T) if mode is SwitchingMode.SS else adhoc_asy(scaled, z_0, z_T)
        adhoc_report = validate_trajectory(scaled, adhoc, p_g, config, condition4=assumption)
        result = algorithm1(scaled, z_0, z_T, p_g, config, settings.solver, settings.driver)
        ott_report = validate_trajectory(scaled, result.trajectory, p_g, config, condition4=assumption)
        critical = (result.necessary_slack or 0.0) > HP_TOL
        record.update(
            {
                f"{key}_adhoc_H_p": adhoc_report.H_p,
                f"{key}_adhoc_H_b": adhoc_report.H_b,
                f"{key}_adhoc_H_v": adhoc_report.H_v,
                f"{key}_ott_H_p": ott_report.H_p,
                f"{key}_ott_H_b": ott_report.H_b,
                f"{key}_ott_H_v": ott_report.H_v,
                f"{key}_critical": critical,
                f"{key}_model1_H_p": result.necessary_slack,
            }
        )
        if critical:
            strict = config.model_copy(update={"n_e": 0})
            f2 = _tetop_cost(scaled, z_0, strict, beta, n_s, settings, False)
            f3 = _tetop_cost(scaled, z_0, strict, beta, n_s, settings, True)
            record[f"{key}_r_f2"] = None if f2 is None else cost_change(f2, f1)
            record[f"{key}_r_f3"] = None if f3 is None else cost_change(f3, f1)
    return record


def _run_scenario(args) -> str:
    case, scenario, settings, n_s, out_dir = args
    path = Path(out_dir) / f"{scenario.id}.json"
    start = time.perf_counter()
    try:
        record = analyse_scenario(case, scenario, settings, n_s)
    except ToposhiftError as e:
        logger.warning(f"Scenario {scenario.id} failed: {e}")
        record = {"id": scenario.id, "load_factor": scenario.load_factor, "error": e.code}
    record["wall_time"] = time.perf_counter() - start
    path.write_text(json.dumps(rounded(record), indent=2), encoding="utf-8")
    return str(path)


# =============================================================================
# Statistics
# =============================================================================


def _ratio(hits: int, total: int) -> float:
    return hits / total if total else math.nan


def _values(records: list[dict], key: str) -> list:
    return [r.get(key) for r in records if "error" not in r]


def summarise(records: list[dict], modes: list[SwitchingMode]) -> dict[str, float]:
    """Ratio statistics over analysed scenarios; empty denominators give NaN."""
    ok = [r for r in records if "error" not in r]
    stats: dict[str, float] = {}
    one = _values(ok, "one_H_p")
    stats["r_1o"] = _ratio(sum(h > HP_TOL for h in one), len(one))
    for mode in (SwitchingMode.SS, SwitchingMode.AS):
        m = "s" if mode is SwitchingMode.SS else "a"
        k = mode.value
        if mode not in modes:
            for name in ("r_1", "r_2", "e_1", "r_3", "r_4", "r_5", "r_6", "e_2", "r_7"):
                stats[f"{name}{m}"] = math.nan
            continue
        adhoc_bad = [r for r in ok if r[f"{k}_adhoc_H_p"] > HP_TOL]
        stats[f"r_1{m}"] = _ratio(len(adhoc_bad), len(ok))
        stats[f"r_2{m}"] = _ratio(sum(r[f"{k}_ott_H_p"] <= HP_TOL for r in adhoc_bad), len(adhoc_bad))
        stats[f"e_1{m}"] = max(
            (r[f"{k}_ott_H_p"] / r[f"{k}_adhoc_H_p"] for r in adhoc_bad), default=math.nan
        )
        critical = [r for r in ok if r[f"{k}_critical"]]
        stats[f"r_3{m}"] = _ratio(len(critical), len(ok))
        improved = 0
        for r in ok:
            hb, hv = r[f"{k}_ott_H_b"], r[f"{k}_ott_H_v"]
            hb0, hv0 = r[f"{k}_adhoc_H_b"], r[f"{k}_adhoc_H_v"]
            if hb <= hb0 and hv <= hv0 and (hb < hb0 or hv < hv0):
                improved += 1
        stats[f"r_4{m}"] = _ratio(improved, len(ok))
        tfot = [r for r in critical if r.get(f"{k}_r_f2") is not None]
        stats[f"r_5{m}"] = _ratio(
            sum((r[f"{k}_model1_H_p"] or 0.0) > HP_TOL for r in tfot), len(critical)
        )
        stats[f"r_6{m}"] = _ratio(sum(r[f"{k}_r_f2"] < CHEAP_COST_CHANGE for r in tfot), len(tfot))
        stats[f"e_2{m}"] = max((r[f"{k}_r_f2"] for r in tfot), default=math.nan)
        both = [r for r in tfot if r.get(f"{k}_r_f3") is not None]
        stats[f"r_7{m}"] = _ratio(
            sum(r[f"{k}_r_f3"] > r[f"{k}_r_f2"] + 1e-9 for r in both), len(both)
        )
    return stats


def run_batch(
    case: GridCase,
    load_profile: list[float],
    n_s: int,
    out_dir: Path,
    n_s_min: int = 0,
    settings: Settings | None = None,
    workers: int = 1,
) -> dict[str, float]:
    """Build, analyse and summarise every scenario of a load profile.

    Writes one JSON file per scenario plus ``scenarios.csv`` and
    ``metrics.csv`` into ``out_dir``.
    """
    settings = settings or Settings()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenarios = build_scenarios(case, load_profile, n_s, n_s_min, settings)
    jobs = [(case, s, settings, n_s, str(out_dir)) for s in scenarios]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            paths = list(pool.map(_run_scenario, jobs))
    else:
        paths = [_run_scenario(job) for job in jobs]

    records = [json.loads(Path(p).read_text(encoding="utf-8")) for p in paths]
    write_csv(records, out_dir / "scenarios.csv")
    modes = [SwitchingMode.SS] + ([SwitchingMode.AS] if case.agents else [])
    stats = summarise(records, modes)
    write_csv([{"metric": k, "value": v} for k, v in stats.items()], out_dir / "metrics.csv")
    logger.info(f"Batch finished: {len(records)} scenarios written to {out_dir}")
    return stats
