"""Command-line entry point.

Exit codes: 0 success, 1 usage or I/O error, 2 infeasible, 3 search limit
reached.
"""

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np
from fastmcp.utilities.logging import get_logger

from toposhift import __version__
from toposhift.batch import run_batch
from toposhift.config import WEIGHT_SEPARATION, OttConfig, Settings, SwitchingMode, load_settings
from toposhift.dcflow import Condition4Mode, dispatch_cost
from toposhift.driver import algorithm1, solve_direct, solve_ots, tetop_algorithm1
from toposhift.errors import InfeasibleError, LimitReachedError, ToposhiftError
from toposhift.formulations import build_ott, build_tetop
from toposhift.grid import GridCase, load_case
from toposhift.mcheck import RhoMode, Scenario, rho_probability
from toposhift.milp import SolveStatus, solve_bb
from toposhift.mps import export_mps, run_external_solver
from toposhift.reports import (
    read_trajectory,
    read_vector,
    rho_document,
    report_document,
    topology_document,
    trajectory_document,
    write_json,
    write_metric_csv,
    write_rho_csv,
)
from toposhift.server import create_server
from toposhift.trajectories import adhoc_asy, adhoc_one, adhoc_syn, decode, validate_trajectory

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_LIMIT = 3


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with exit status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"Error: {message}", file=sys.stderr)
        sys.exit(EXIT_ERROR)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="toposhift", description="Optimal topology transition planning")
    parser.add_argument("--version", action="version", version=f"toposhift {__version__}")
    parser.add_argument(
        "--config",
        type=Path,
        help="Settings file (TOML or JSON); falls back to TOPOSHIFT_CONFIG",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: WARNING)",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve-ots", help="Cheapest-dispatch topology within a switching budget")
    p.add_argument("case", type=Path)
    p.add_argument("--ns", type=int, required=True, help="Maximum number of status changes")
    p.add_argument("--ns-min", type=int, default=0, help="Minimum number of switched-on branches")
    p.add_argument("--output", type=Path)

    p = sub.add_parser("solve-ott", help="Optimal switching sequence between two topologies")
    p.add_argument("case", type=Path)
    p.add_argument("--z0", type=Path, required=True, help="Initial topology JSON")
    p.add_argument("--zT", type=Path, required=True, help="Terminal topology JSON")
    p.add_argument("--pg", type=Path, required=True, help="Generation JSON (list or {'p_g': [...]})")
    p.add_argument("--mode", choices=["ss", "as"])
    p.add_argument("--Tu", type=int, help="Horizon (direct solve and MPS export)")
    p.add_argument("--ne", type=int, help="Extra switching actions allowed")
    p.add_argument("--algorithm", choices=["direct", "alg1"], default="alg1")
    p.add_argument("--external", action="store_true", help="Direct solve with the configured external command")
    p.add_argument("--export-mps", type=Path, metavar="PATH", help="Write the model and exit")
    p.add_argument("--quadratic", action="store_true", help="Include the quadratic objective in the export")
    p.add_argument("--output", type=Path)
    p.add_argument("--metrics-csv", type=Path)

    p = sub.add_parser("solve-tetop", help="Terminal topology co-optimized with its transition")
    p.add_argument("case", type=Path)
    p.add_argument("--z0", type=Path, required=True)
    p.add_argument("--ns", type=int, required=True)
    p.add_argument("--ns-min", type=int, default=0)
    p.add_argument("--beta", type=float)
    p.add_argument("--mode", choices=["ss", "as"])
    p.add_argument("--Tu", type=int)
    p.add_argument("--algorithm", choices=["direct", "alg1"], default="alg1")
    p.add_argument("--export-mps", type=Path, metavar="PATH")
    p.add_argument("--output", type=Path)

    p = sub.add_parser("adhoc", help="Ad hoc switching sequence")
    p.add_argument("case", type=Path)
    p.add_argument("kind", choices=["syn", "asy", "one"])
    p.add_argument("--z0", type=Path, required=True)
    p.add_argument("--zT", type=Path, required=True)
    p.add_argument("--order", type=Path, help="JSON list of branch indices for 'one'")
    p.add_argument("--output", type=Path)

    p = sub.add_parser("validate", help="Check a trajectory and compute its metrics")
    p.add_argument("case", type=Path)
    p.add_argument("--trajectory", type=Path, required=True)
    p.add_argument("--pg", type=Path, required=True)
    p.add_argument("--mode", choices=["ss", "as"])
    p.add_argument("--condition4", choices=["exhaustive", "assumption"], default="exhaustive")
    p.add_argument("--output", type=Path)
    p.add_argument("--metrics-csv", type=Path)

    p = sub.add_parser("rho", help="Violation probability of intermediate topologies")
    p.add_argument("case", type=Path)
    p.add_argument(
        "--scenario",
        nargs=2,
        action="append",
        type=Path,
        required=True,
        metavar=("TRAJECTORY", "PG"),
        help="Trajectory and generation files; repeat for several scenarios",
    )
    p.add_argument("--mode", choices=["exhaustive", "sample"], default="exhaustive")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--csv", type=Path)
    p.add_argument("--output", type=Path)

    p = sub.add_parser("batch", help="Transition statistics over a load profile")
    p.add_argument("case", type=Path)
    p.add_argument("--load-profile", required=True, help="Comma-separated load factors")
    p.add_argument("--ns", type=int, required=True)
    p.add_argument("--ns-min", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=1)

    sub.add_parser("serve", help="Run the MCP server over stdio")
    return parser


def _ott_config(settings: Settings, args) -> OttConfig:
    update = {}
    if getattr(args, "mode", None):
        update["mode"] = SwitchingMode(args.mode)
    if getattr(args, "Tu", None) is not None:
        update["T_u"] = args.Tu
    if getattr(args, "ne", None) is not None:
        update["n_e"] = args.ne
    return OttConfig.model_validate({**settings.ott.model_dump(), **update})


def _topology(path: Path) -> np.ndarray:
    return read_vector(path, "topology").astype(int)


# =============================================================================
# Commands
# =============================================================================


def cmd_solve_ots(case: GridCase, settings: Settings, args) -> int:
    z, p_g, cost = solve_ots(case, args.ns, args.ns_min, None, settings.ott, settings.solver)
    write_json(topology_document(z, p_g, cost, "optimal"), args.output)
    return EXIT_OK


def cmd_solve_ott(case: GridCase, settings: Settings, args) -> int:
    config = _ott_config(settings, args)
    z_0 = _topology(args.z0)
    z_T = _topology(args.zT)
    p_g = read_vector(args.pg, "p_g")
    if args.export_mps:
        model = build_ott(case, z_0, z_T, p_g, config)
        export_mps(model, args.export_mps, quadratic=args.quadratic)
        return EXIT_OK

    if args.external:
        if not settings.solver.external_command:
            raise ToposhiftError("no external_command configured")
        model = build_ott(case, z_0, z_T, p_g, config)
        outcome = run_external_solver(model, settings.solver.external_command, settings.solver)
        traj, decision = decode(outcome, model)
    elif args.algorithm == "direct":
        traj, decision = solve_direct(case, z_0, z_T, p_g, config, settings.solver)
    else:
        result = algorithm1(case, z_0, z_T, p_g, config, settings.solver, settings.driver)
        traj, decision = result.trajectory, result.decision
    report = validate_trajectory(case, traj, p_g, config, condition4=Condition4Mode.ASSUMPTION)
    write_json(trajectory_document(traj, decision, report), args.output)
    if args.metrics_csv:
        write_metric_csv([("ott", report)], args.metrics_csv)
    return EXIT_LIMIT if decision.status == SolveStatus.NODE_LIMIT.value else EXIT_OK


def cmd_solve_tetop(case: GridCase, settings: Settings, args) -> int:
    config = _ott_config(settings, args)
    z_0 = _topology(args.z0)
    beta = WEIGHT_SEPARATION * config.alpha_c if args.beta is None else args.beta
    if args.export_mps:
        export_mps(build_tetop(case, z_0, config, beta, args.ns, args.ns_min), args.export_mps)
        return EXIT_OK
    if args.algorithm == "direct":
        model = build_tetop(case, z_0, config, beta, args.ns, args.ns_min)
        outcome = solve_bb(model, settings=settings.solver)
        if outcome.status is SolveStatus.NODE_LIMIT and not outcome.has_solution:
            raise LimitReachedError("search limit reached without a solution")
        traj, decision = decode(outcome, model)
    else:
        result = tetop_algorithm1(
            case, z_0, config, beta, args.ns, args.ns_min, settings.solver, settings.driver
        )
        traj, decision = result.trajectory, result.decision
    doc = trajectory_document(traj, decision)
    doc["terminal"] = decision.terminal.tolist()
    doc["dispatch_cost"] = dispatch_cost(case, decision.p_g)
    write_json(doc, args.output)
    return EXIT_LIMIT if decision.status == SolveStatus.NODE_LIMIT.value else EXIT_OK


def cmd_adhoc(case: GridCase, settings: Settings, args) -> int:
    z_0 = _topology(args.z0)
    z_T = _topology(args.zT)
    if args.kind == "syn":
        traj = adhoc_syn(z_0, z_T)
    elif args.kind == "asy":
        traj = adhoc_asy(case, z_0, z_T)
    else:
        order = read_vector(args.order, "order").astype(int).tolist() if args.order else None
        traj = adhoc_one(z_0, z_T, order)
    write_json(trajectory_document(traj), args.output)
    return EXIT_OK


def cmd_validate(case: GridCase, settings: Settings, args) -> int:
    traj = read_trajectory(args.trajectory)
    p_g = read_vector(args.pg, "p_g")
    report = validate_trajectory(
        case,
        traj,
        p_g,
        settings.ott,
        mode=SwitchingMode(args.mode) if args.mode else None,
        condition4=Condition4Mode(args.condition4),
        cap=settings.solver.enumeration_cap,
    )
    write_json(report_document(report), args.output)
    if args.metrics_csv:
        write_metric_csv([(str(args.trajectory), report)], args.metrics_csv)
    return EXIT_OK


def cmd_rho(case: GridCase, settings: Settings, args) -> int:
    scenarios = [
        Scenario(id=traj_path.stem, trajectory=read_trajectory(traj_path), p_g=read_vector(pg_path, "p_g"))
        for traj_path, pg_path in args.scenario
    ]
    mcheck = settings.mcheck
    update = {k: v for k, v in (("samples", args.samples), ("seed", args.seed)) if v is not None}
    if update:
        mcheck = mcheck.model_validate({**mcheck.model_dump(), **update})
    result = rho_probability(
        case, scenarios, RhoMode(args.mode), mcheck, settings.solver.enumeration_cap
    )
    write_json(rho_document(result), args.output)
    if args.csv:
        write_rho_csv(result, args.csv)
    return EXIT_OK


def cmd_batch(case: GridCase, settings: Settings, args) -> int:
    try:
        profile = [float(v) for v in args.load_profile.split(",") if v.strip()]
    except ValueError:
        raise ToposhiftError(f"invalid load profile {args.load_profile!r}") from None
    stats = run_batch(case, profile, args.ns, args.out, args.ns_min, settings, args.workers)
    write_json(stats)
    return EXIT_OK


COMMANDS = {
    "solve-ots": cmd_solve_ots,
    "solve-ott": cmd_solve_ott,
    "solve-tetop": cmd_solve_tetop,
    "adhoc": cmd_adhoc,
    "validate": cmd_validate,
    "rho": cmd_rho,
    "batch": cmd_batch,
}


def main():
    """Run the toposhift command line."""
    args = _build_parser().parse_args()
    logging.basicConfig(level=args.log_level, stream=sys.stderr)
    logging.getLogger("toposhift").setLevel(args.log_level)

    try:
        settings = load_settings(args.config)
    except ToposhiftError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_ERROR)

    if args.command == "serve":
        logger.info(f"Toposhift v{__version__} starting")
        server = create_server(settings)
        logger.info("Server ready")
        server.run(show_banner=False)
        return

    start = time.perf_counter()
    try:
        case = load_case(args.case)
        status = COMMANDS[args.command](case, settings, args)
    except InfeasibleError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_INFEASIBLE)
    except LimitReachedError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_LIMIT)
    except (ToposhiftError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_ERROR)
    except OSError as e:
        print(f"Error: {e.strerror or e} ({e.filename})", file=sys.stderr)
        sys.exit(EXIT_ERROR)
    logger.debug(f"{args.command} finished in {(time.perf_counter() - start) * 1000:.1f}ms")
    if status:
        sys.exit(status)


if __name__ == "__main__":  # pragma: no cover
    main()
