"""Fixed-format MPS export/import and the external-solver bridge."""

import shlex
import subprocess
import tempfile
import time
from pathlib import Path

import numpy as np
from fastmcp.utilities.logging import get_logger

from toposhift.config import SolverSettings
from toposhift.errors import ModelError, SolverBridgeError
from toposhift.milp import MilpModel, Sense, SolveOutcome, SolveStatus, VarKind

logger = get_logger(__name__)

OBJECTIVE_ROW = "OBJ"
BOUND_SET = "BND"
RHS_SET = "RHS"

_SENSE_CODES = {Sense.LE: "L", Sense.EQ: "E", Sense.GE: "G"}
_CODE_SENSES = {code: sense for sense, code in _SENSE_CODES.items()}


def column_name(i: int) -> str:
    return f"C{i:07d}"


def row_name(r: int) -> str:
    return f"R{r:07d}"


def _num(value: float) -> str:
    """Shortest representation of ``value`` fitting a 12-character field."""
    for digits in range(12, 0, -1):
        text = f"{value:.{digits}g}"
        if len(text) <= 12:
            return text
    return f"{value:.1e}"


def _line(f1: str = "", f2: str = "", f3: str = "", f4: str = "", f5: str = "", f6: str = "") -> str:
    # Fixed-format field columns: 2-3, 5-12, 15-22, 25-36, 40-47, 50-61.
    text = f" {f1:<2} {f2:<8}  {f3:<8}  {f4:<12}   {f5:<8}  {f6:<12}"
    return text.rstrip() + "\n"


# =============================================================================
# Export
# =============================================================================


def export_mps(model: MilpModel, path: Path, quadratic: bool = False) -> Path:
    """Write ``model`` as fixed-format MPS.

    Column and row names are positional (``C0000000``, ``R0000000``) so every
    name fits the 8-character fields. Binaries sit inside INTORG/INTEND
    markers with BV bounds. With ``quadratic`` the export-only quadratic
    objective terms are written in a QUADOBJ section.

    Raises:
        ModelError: If the model is not sealed.
        OSError: If the file cannot be written.
    """
    if not model.sealed:
        raise ModelError("model must be sealed before export")
    path = Path(path)
    lb, ub = model.bounds
    kinds = model.kinds
    constraints = model.constraints

    columns: list[list[tuple[str, float]]] = [[] for _ in range(model.n_vars)]
    for i, coef in model.objective_terms.items():
        columns[i].append((OBJECTIVE_ROW, coef))
    for r, con in enumerate(constraints):
        for i, coef in zip(con.indices, con.coefs):
            columns[int(i)].append((row_name(r), float(coef)))

    parts = [f"* {model.n_vars} columns, {len(constraints)} rows\n"]
    parts.append(f"NAME          {model.name[:40]}\n")
    parts.append("ROWS\n")
    parts.append(_line("N", OBJECTIVE_ROW))
    for r, con in enumerate(constraints):
        parts.append(_line(_SENSE_CODES[con.sense], row_name(r)))

    parts.append("COLUMNS\n")
    in_marker = False
    marker_count = 0
    for i in range(model.n_vars):
        is_int = kinds[i] is VarKind.BINARY
        if is_int and not in_marker:
            parts.append(_line("", "MARKER", "'MARKER'", "", "'INTORG'"))
            in_marker = True
        elif not is_int and in_marker:
            parts.append(_line("", "MARKER", "'MARKER'", "", "'INTEND'"))
            in_marker = False
            marker_count += 1
        entries = columns[i] or [(OBJECTIVE_ROW, 0.0)]
        for k in range(0, len(entries), 2):
            pair = entries[k : k + 2]
            fields = [pair[0][0], _num(pair[0][1])]
            if len(pair) == 2:
                fields += [pair[1][0], _num(pair[1][1])]
            parts.append(_line("", column_name(i), *fields))
    if in_marker:
        parts.append(_line("", "MARKER", "'MARKER'", "", "'INTEND'"))

    parts.append("RHS\n")
    if model.offset:
        # Objective constant is minus the RHS of the objective row.
        parts.append(_line("", RHS_SET, OBJECTIVE_ROW, _num(-model.offset)))
    for r, con in enumerate(constraints):
        if con.rhs:
            parts.append(_line("", RHS_SET, row_name(r), _num(con.rhs)))

    parts.append("BOUNDS\n")
    for i in range(model.n_vars):
        name = column_name(i)
        lo, hi = lb[i], ub[i]
        if kinds[i] is VarKind.BINARY and lo == 0.0 and hi == 1.0:
            parts.append(_line("BV", BOUND_SET, name))
        elif lo == hi:
            parts.append(_line("FX", BOUND_SET, name, _num(lo)))
        elif np.isneginf(lo) and np.isposinf(hi):
            parts.append(_line("FR", BOUND_SET, name))
        else:
            if np.isneginf(lo):
                parts.append(_line("MI", BOUND_SET, name))
            elif lo != 0.0:
                parts.append(_line("LO", BOUND_SET, name, _num(lo)))
            if not np.isposinf(hi):
                parts.append(_line("UP", BOUND_SET, name, _num(hi)))

    if quadratic and model.quadratic_terms:
        # Objective is c'x + 1/2 x'Qx; only the upper triangle is listed.
        parts.append("QUADOBJ\n")
        for (i, j), coef in sorted(model.quadratic_terms.items()):
            q = 2.0 * coef if i == j else coef
            parts.append(_line("", column_name(i), column_name(j), _num(q)))

    parts.append("ENDATA\n")
    path.write_text("".join(parts), encoding="ascii")
    logger.info(f"Wrote MPS {path} ({model.n_vars} columns, {len(constraints)} rows)")
    return path


# =============================================================================
# Import
# =============================================================================


def read_mps(path: Path) -> MilpModel:
    """Read the MPS subset written by :func:`export_mps` into a sealed model.

    Raises:
        ModelError: On malformed or unsupported content.
        OSError: If the file cannot be read.
    """
    path = Path(path)
    name = path.stem
    row_senses: dict[str, Sense] = {}
    row_order: list[str] = []
    objective_row = None
    col_order: list[str] = []
    col_binary: dict[str, bool] = {}
    coefs: dict[str, list[tuple[str, float]]] = {}
    rhs: dict[str, float] = {}
    bounds: dict[str, tuple[float, float]] = {}
    quadratic: list[tuple[str, str, float]] = []
    section = None
    in_marker = False

    for lineno, raw in enumerate(path.read_text(encoding="ascii").splitlines(), 1):
        if not raw.strip() or raw.startswith("*"):
            continue
        tokens = raw.split()
        if not raw[0].isspace():
            section = tokens[0]
            if section == "NAME" and len(tokens) > 1:
                name = tokens[1]
            if section == "ENDATA":
                break
            continue
        try:
            if section == "ROWS":
                code, row = tokens
                if code == "N":
                    objective_row = objective_row or row
                else:
                    row_senses[row] = _CODE_SENSES[code]
                    row_order.append(row)
            elif section == "COLUMNS":
                if len(tokens) >= 3 and tokens[1] == "'MARKER'":
                    in_marker = tokens[2] == "'INTORG'"
                    continue
                col = tokens[0]
                if col not in coefs:
                    col_order.append(col)
                    coefs[col] = []
                    col_binary[col] = in_marker
                for k in range(1, len(tokens), 2):
                    coefs[col].append((tokens[k], float(tokens[k + 1])))
            elif section == "RHS":
                for k in range(1, len(tokens), 2):
                    rhs[tokens[k]] = float(tokens[k + 1])
            elif section == "BOUNDS":
                kind, col = tokens[0], tokens[2]
                lo, hi = bounds.get(col, (0.0, np.inf))
                value = float(tokens[3]) if len(tokens) > 3 else None
                if kind == "BV":
                    lo, hi = 0.0, 1.0
                elif kind == "FX":
                    lo = hi = value
                elif kind == "FR":
                    lo, hi = -np.inf, np.inf
                elif kind == "MI":
                    lo = -np.inf
                elif kind == "LO":
                    lo = value
                elif kind == "UP":
                    hi = value
                else:
                    raise ModelError(f"{path}:{lineno}: unsupported bound type {kind}")
                bounds[col] = (lo, hi)
            elif section == "QUADOBJ":
                quadratic.append((tokens[0], tokens[1], float(tokens[2])))
            else:
                raise ModelError(f"{path}:{lineno}: unsupported section {section}")
        except ModelError:
            raise
        except (ValueError, IndexError, KeyError) as e:
            raise ModelError(f"{path}:{lineno}: cannot parse {raw.strip()!r}") from e

    model = MilpModel(name)
    index = {}
    for col in col_order:
        lo, hi = bounds.get(col, (0.0, 1.0 if col_binary[col] else np.inf))
        kind = VarKind.BINARY if col_binary[col] else VarKind.CONTINUOUS
        index[col] = model.add_var(col, kind, lo, hi)

    rows: dict[str, list[tuple[int, float]]] = {row: [] for row in row_order}
    for col in col_order:
        for row, coef in coefs[col]:
            if row == objective_row:
                model.add_objective(index[col], coef)
            elif row in rows:
                rows[row].append((index[col], coef))
            else:
                raise ModelError(f"{path}: column {col} references unknown row {row}")
    for row in row_order:
        model.add_constraint(rows[row], row_senses[row], rhs.get(row, 0.0), name=row)
    if objective_row in rhs:
        model.offset = -rhs[objective_row]
    for a, b, q in quadratic:
        i, j = index[a], index[b]
        model.add_quadratic_objective(i, j, q / 2.0 if i == j else q)
    return model.seal()


# =============================================================================
# External Solver Bridge
# =============================================================================


def parse_solution(text: str, model: MilpModel) -> np.ndarray | None:
    """Parse ``<name> <value>`` lines; columns that are not listed are zero.

    Returns None if no line names a model column.
    """
    lookup = {column_name(i): i for i in range(model.n_vars)}
    for i, name in enumerate(model.names):
        lookup.setdefault(name, i)
    x = np.zeros(model.n_vars)
    found = 0
    for line in text.splitlines():
        tokens = line.split()
        if len(tokens) < 2 or tokens[0] not in lookup:
            continue
        try:
            x[lookup[tokens[0]]] = float(tokens[1])
        except ValueError:
            continue
        found += 1
    return x if found else None


def run_external_solver(
    model: MilpModel,
    command: list[str],
    settings: SolverSettings | None = None,
) -> SolveOutcome:
    """Solve ``model`` with an external command through an MPS file.

    ``command`` is an argv template; ``{mps}`` and ``{solution}`` are
    replaced by file paths. Without ``{solution}`` the solution is read from
    standard output.

    Raises:
        SolverBridgeError: If the command fails or returns an infeasible assignment.
    """
    settings = settings or SolverSettings()
    start = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="toposhift-") as tmp:
        mps_path = export_mps(model, Path(tmp) / "model.mps")
        sol_path = Path(tmp) / "model.sol"
        argv = [
            arg.replace("{mps}", str(mps_path)).replace("{solution}", str(sol_path))
            for arg in command
        ]
        logger.info(f"Running external solver: {shlex.join(argv)}")
        try:
            proc = subprocess.run(
                argv,
                capture_output=True,
                text=True,
                timeout=settings.time_limit,
                check=False,
            )
        except (OSError, subprocess.TimeoutExpired) as e:
            raise SolverBridgeError(f"external solver failed to run: {e}") from e
        if proc.returncode != 0:
            raise SolverBridgeError(
                f"external solver exited with {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        if any("{solution}" in arg for arg in command):
            try:
                text = sol_path.read_text(encoding="utf-8")
            except OSError as e:
                raise SolverBridgeError(f"solution file missing: {e}") from e
        else:
            text = proc.stdout

    elapsed = time.perf_counter() - start
    x = parse_solution(text, model)
    if x is None:
        return SolveOutcome(SolveStatus.INFEASIBLE, None, None, None, 0, elapsed)
    violation = model.max_violation(x)
    if violation > settings.integrality_tol * 10:
        raise SolverBridgeError(f"external solution violates the model by {violation:.3e}")
    objective = model.objective_value(x)
    return SolveOutcome(SolveStatus.OPTIMAL, x, objective, objective, 0, elapsed)
