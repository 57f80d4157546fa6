"""JSON and CSV encodings of topologies, trajectories, decisions and metrics.

Every number is written with 9 significant digits.
"""

import json
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from toposhift.errors import CaseError
from toposhift.formulations import OttDecision
from toposhift.mcheck import RhoResult
from toposhift.trajectories import MetricReport, Trajectory

FLOAT_FORMAT = "%.9g"


def sig9(value: float) -> float | None:
    """Round to 9 significant digits; NaN and infinities become None."""
    value = float(value)
    if not math.isfinite(value):
        return None
    return float(f"{value:.9g}")


def rounded(obj):
    """Recursively round floats in a JSON-compatible structure."""
    if isinstance(obj, dict):
        return {k: rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return rounded(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return sig9(obj)
    return obj


def dumps(payload) -> str:
    return json.dumps(rounded(payload), indent=2)


def write_json(payload, path: Path | None = None) -> None:
    """Write to ``path`` or standard output."""
    text = dumps(payload)
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


# =============================================================================
# Documents
# =============================================================================


def topology_document(z, p_g, cost: float | None = None, status: str | None = None) -> dict:
    doc = {"topology": np.asarray(z, dtype=int).tolist(), "p_g": np.asarray(p_g, dtype=float).tolist()}
    if cost is not None:
        doc["dispatch_cost"] = cost
    if status is not None:
        doc["status"] = status
    return doc


def report_document(report: MetricReport) -> dict:
    doc = report.model_dump()
    doc["feasible"] = report.feasible
    return doc


def trajectory_document(
    traj: Trajectory,
    decision: OttDecision | None = None,
    report: MetricReport | None = None,
) -> dict:
    """Trajectory with batch annotations, plus the decision summary when given."""
    doc: dict = {"topologies": traj.topologies, "batches": traj.batches(), "T": traj.T}
    if decision is not None:
        doc["decision"] = {
            "status": decision.status,
            "objective": decision.objective,
            "T_u": decision.T_u,
            "delta": decision.delta.tolist(),
            "agents": [int(np.argmax(u)) for u in decision.u],
            "p_g": decision.p_g.tolist(),
            "nodes": decision.nodes,
        }
    if report is not None:
        doc["metrics"] = report_document(report)
    return doc


def rho_document(result: RhoResult) -> dict:
    return {
        "rho": result.rho,
        "numerator": result.numerator,
        "denominator": result.denominator,
        "no_intermediates": result.no_intermediates,
        "standard_error": result.standard_error,
        "mode": result.mode.value,
    }


# =============================================================================
# Readers
# =============================================================================


def _load(path: Path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CaseError(f"{path} is not valid JSON: {e}") from e


def read_vector(path: Path, key: str) -> np.ndarray:
    """A vector stored as a bare JSON list or under ``key``."""
    doc = _load(path)
    if isinstance(doc, dict):
        if key not in doc:
            raise CaseError(f"{path} has no {key!r} entry")
        doc = doc[key]
    if not isinstance(doc, list):
        raise CaseError(f"{path}: {key} must be a list")
    return np.asarray(doc, dtype=float)


def read_trajectory(path: Path) -> Trajectory:
    doc = _load(path)
    if isinstance(doc, list):
        doc = {"topologies": doc}
    try:
        return Trajectory(topologies=doc["topologies"])
    except (KeyError, TypeError, ValueError) as e:
        raise CaseError(f"{path} is not a trajectory document: {e}") from e


# =============================================================================
# CSV
# =============================================================================


def write_csv(rows: list[dict], path: Path, columns: list[str] | None = None) -> None:
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format=FLOAT_FORMAT)


def metric_rows(labelled: list[tuple[str, MetricReport]]) -> list[dict]:
    rows = []
    for label, report in labelled:
        row = {"label": label}
        row.update(report.model_dump(exclude={"details"}))
        row["feasible"] = report.feasible
        rows.append(row)
    return rows


def write_metric_csv(labelled: list[tuple[str, MetricReport]], path: Path) -> None:
    write_csv(metric_rows(labelled), path)


def write_rho_csv(result: RhoResult, path: Path) -> None:
    rows = [
        {
            "scenario": r.scenario,
            "t": r.t,
            "variants": r.variants,
            "violations": r.violations,
            "rho": r.rho,
        }
        for r in result.rows
    ]
    write_csv(rows, path, columns=["scenario", "t", "variants", "violations", "rho"])
