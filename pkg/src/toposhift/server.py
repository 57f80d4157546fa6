"""MCP server exposing the planning tools over FastMCP."""

import time
from pathlib import Path

import numpy as np
from fastmcp import FastMCP
from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel

from toposhift import __version__
from toposhift.config import WEIGHT_SEPARATION, OttConfig, Settings, SwitchingMode
from toposhift.dcflow import Condition4Mode, dispatch_cost
from toposhift.driver import algorithm1, solve_direct, tetop_algorithm1
from toposhift.driver import solve_ots as run_ots
from toposhift.errors import ToposhiftError
from toposhift.formulations import build_tetop
from toposhift.grid import load_case
from toposhift.mcheck import RhoMode, Scenario, rho_probability as estimate_rho
from toposhift.milp import solve_bb
from toposhift.reports import rho_document, rounded, topology_document, trajectory_document
from toposhift.trajectories import (
    Trajectory,
    adhoc_asy,
    adhoc_one,
    adhoc_syn,
    decode,
)
from toposhift.trajectories import validate_trajectory as check_trajectory

logger = get_logger(__name__)


class ErrorResponse(BaseModel):
    """Structured error for graceful failure responses."""

    code: str  # ToposhiftError codes, plus "INVALID_ARGUMENT" and "READ_ERROR"
    message: str


def format_os_error(error: OSError) -> str:
    """Format an OSError into a human-readable message.

    Args:
        error: The OSError (or subclass) to format.

    Returns:
        Human-readable error message with context.
    """
    parts = []
    if error.strerror:
        parts.append(error.strerror)
    elif str(error):
        parts.append(str(error))
    if error.filename:
        parts.append(f"(file: {error.filename})")
    return " ".join(parts) if parts else "Unknown I/O error"


def _error(e: Exception) -> dict:
    if isinstance(e, ToposhiftError):
        response = ErrorResponse(code=e.code, message=str(e))
    elif isinstance(e, ValueError):
        response = ErrorResponse(code="INVALID_ARGUMENT", message=str(e))
    else:
        response = ErrorResponse(code="READ_ERROR", message=format_os_error(e))
    return {"error": response.model_dump()}


def create_server(settings: Settings | None = None) -> FastMCP:
    """Create and configure the MCP server with tools.

    Args:
        settings: Solver and transition settings used by every tool.

    Returns:
        Configured FastMCP server instance.
    """
    settings = settings or Settings()
    server = FastMCP(
        name="toposhift",
        instructions="Plan line-switching sequences for power networks. Cases are "
        "JSON files with buses, branches, agents and a reference bus; topologies "
        "are 0/1 lists with one entry per branch.",
        version=__version__,
    )

    def ott_config(mode: str | None, T_u: int | None, n_e: int | None):
        update = {}
        if mode is not None:
            update["mode"] = SwitchingMode(mode)
        if T_u is not None:
            update["T_u"] = T_u
        if n_e is not None:
            update["n_e"] = n_e
        return OttConfig.model_validate({**settings.ott.model_dump(), **update})

    @server.tool
    def solve_ots(case_path: str, n_s: int, n_s_min: int = 0) -> dict:
        """Find the cheapest-dispatch topology within a switching budget.

        Args:
            case_path: Path to the case JSON file.
            n_s: Maximum number of branches whose status may change.
            n_s_min: Minimum number of switched-on branches.

        Returns:
            On success: {"topology": [...], "p_g": [...], "dispatch_cost": float}
            On error: {"error": {"code": "INFEASIBLE"|"INVALID_CASE"|..., "message": "..."}}

        Example:
            Tool call:
            ```json
            {"tool": "solve_ots", "parameters": {"case_path": "case5.json", "n_s": 2}}
            ```

            Response:
            ```json
            {"topology": [1, 0, 1, 1, 1], "p_g": [2.0, 0.0, 0.0], "dispatch_cost": 2.0}
            ```
        """
        logger.info(f"solve_ots(case_path={case_path}, n_s={n_s}, n_s_min={n_s_min})")
        start = time.perf_counter()
        try:
            case = load_case(Path(case_path))
            z, p_g, cost = run_ots(case, n_s, n_s_min, None, settings.ott, settings.solver)
        except (ToposhiftError, OSError, ValueError) as e:
            return _error(e)
        logger.debug(f"OTS solved in {(time.perf_counter() - start) * 1000:.1f}ms")
        return rounded(topology_document(z, p_g, cost))

    @server.tool
    def solve_ott(
        case_path: str,
        z_0: list[int],
        z_T: list[int],
        p_g: list[float],
        mode: str | None = None,
        T_u: int | None = None,
        n_e: int | None = None,
        algorithm: str = "alg1",
    ) -> dict:
        """Find the optimal switching sequence between two topologies.

        Args:
            case_path: Path to the case JSON file.
            z_0: Initial branch statuses.
            z_T: Terminal branch statuses.
            p_g: Generation per bus, held fixed during the transition.
            mode: "ss" (any branches per batch) or "as" (one agent per batch).
            T_u: Horizon for the direct solve.
            n_e: Extra switching actions allowed beyond the necessary ones.
            algorithm: "alg1" (progressive horizon) or "direct".

        Returns:
            On success: {"topologies": [[...], ...], "batches": [[...]], "T": int,
                         "decision": {...}, "metrics": {...}}
            On error: {"error": {"code": "...", "message": "..."}}
        """
        logger.info(f"solve_ott(case_path={case_path}, mode={mode}, algorithm={algorithm})")
        try:
            case = load_case(Path(case_path))
            config = ott_config(mode, T_u, n_e)
            if algorithm == "direct":
                traj, decision = solve_direct(case, z_0, z_T, p_g, config, settings.solver)
            else:
                result = algorithm1(case, z_0, z_T, p_g, config, settings.solver, settings.driver)
                traj, decision = result.trajectory, result.decision
            report = check_trajectory(case, traj, p_g, config, condition4=Condition4Mode.ASSUMPTION)
        except (ToposhiftError, OSError, ValueError) as e:
            return _error(e)
        return rounded(trajectory_document(traj, decision, report))

    @server.tool
    def solve_tetop(
        case_path: str,
        z_0: list[int],
        n_s: int,
        beta: float | None = None,
        mode: str | None = None,
        T_u: int | None = None,
        algorithm: str = "alg1",
    ) -> dict:
        """Co-optimize the terminal topology, its dispatch and a strictly feasible transition.

        Args:
            case_path: Path to the case JSON file.
            z_0: Initial branch statuses.
            n_s: Maximum number of branches whose status may change.
            beta: Weight of the dispatch cost; at least 1e3 times the switching-cost weight.
            mode: "ss" or "as".
            T_u: Horizon for the direct solve.
            algorithm: "alg1" (progressive horizon from one batch) or "direct".

        Returns:
            On success: trajectory document plus {"terminal": [...], "dispatch_cost": float}
            On error: {"error": {"code": "...", "message": "..."}}
        """
        logger.info(f"solve_tetop(case_path={case_path}, n_s={n_s}, mode={mode}, algorithm={algorithm})")
        try:
            case = load_case(Path(case_path))
            config = ott_config(mode, T_u, None)
            weight = WEIGHT_SEPARATION * config.alpha_c if beta is None else beta
            if algorithm == "direct":
                model = build_tetop(case, z_0, config, weight, n_s)
                traj, decision = decode(solve_bb(model, settings=settings.solver), model)
            else:
                result = tetop_algorithm1(case, z_0, config, weight, n_s, 0, settings.solver, settings.driver)
                traj, decision = result.trajectory, result.decision
        except (ToposhiftError, OSError, ValueError) as e:
            return _error(e)
        doc = trajectory_document(traj, decision)
        doc["terminal"] = decision.terminal.tolist()
        doc["dispatch_cost"] = dispatch_cost(case, decision.p_g)
        return rounded(doc)

    @server.tool
    def adhoc_trajectory(
        case_path: str,
        z_0: list[int],
        z_T: list[int],
        kind: str = "syn",
        order: list[int] | None = None,
    ) -> dict:
        """Build an ad hoc switching sequence.

        Args:
            case_path: Path to the case JSON file.
            z_0: Initial branch statuses.
            z_T: Terminal branch statuses.
            kind: "syn" (close all, then open all), "asy" (agent by agent) or
                "one" (one branch per batch).
            order: Branch order for kind "one"; closings first when omitted.

        Returns:
            On success: {"topologies": [[...], ...], "batches": [[...]], "T": int}
            On error: {"error": {"code": "...", "message": "..."}}
        """
        logger.info(f"adhoc_trajectory(case_path={case_path}, kind={kind})")
        try:
            case = load_case(Path(case_path))
            if kind == "asy":
                traj = adhoc_asy(case, z_0, z_T)
            elif kind == "one":
                traj = adhoc_one(z_0, z_T, order)
            else:
                traj = adhoc_syn(z_0, z_T)
        except (ToposhiftError, OSError, ValueError) as e:
            return _error(e)
        return trajectory_document(traj)

    @server.tool
    def validate_trajectory(
        case_path: str,
        topologies: list[list[int]],
        p_g: list[float],
        mode: str | None = None,
        condition4: str = "exhaustive",
    ) -> dict:
        """Check a switching sequence and compute its transition metrics.

        Args:
            case_path: Path to the case JSON file.
            topologies: Transitional topologies from initial to terminal.
            p_g: Generation per bus.
            mode: "ss" or "as"; "as" also checks single-agent batches.
            condition4: "exhaustive" (every intermediate topology) or
                "assumption" (intersection topology only).

        Returns:
            On success: {"H_b": float, "H_v": float, "H_c": float, "H_p": float,
                         "H_n": int, "condition1": bool, ..., "feasible": bool}
            On error: {"error": {"code": "...", "message": "..."}}
        """
        logger.info(f"validate_trajectory(case_path={case_path}, batches={len(topologies) - 1})")
        try:
            case = load_case(Path(case_path))
            traj = Trajectory(topologies=topologies)
            report = check_trajectory(
                case, traj, p_g, settings.ott,
                mode=SwitchingMode(mode) if mode else None,
                condition4=Condition4Mode(condition4),
                cap=settings.solver.enumeration_cap,
            )
        except (ToposhiftError, OSError, ValueError) as e:
            return _error(e)
        doc = report.model_dump()
        doc["feasible"] = report.feasible
        return rounded(doc)

    @server.tool
    def rho_probability(
        case_path: str,
        trajectories: list[list[list[int]]],
        p_g: list[list[float]],
        mode: str = "exhaustive",
    ) -> dict:
        """Share of intermediate topologies that are disconnected or exceed relaxed limits.

        Args:
            case_path: Path to the case JSON file.
            trajectories: Solved trajectories, each a list of topologies.
            p_g: Generation per bus for each trajectory.
            mode: "exhaustive" or "sample" (seeded uniform sampling).

        Returns:
            On success: {"rho": float, "numerator": float, "denominator": int,
                         "no_intermediates": bool, "standard_error": float|null}
            On error: {"error": {"code": "...", "message": "..."}}
        """
        logger.info(f"rho_probability(case_path={case_path}, scenarios={len(trajectories)})")
        try:
            case = load_case(Path(case_path))
            scenarios = [
                Scenario(id=str(i), trajectory=Trajectory(topologies=t), p_g=np.asarray(g, dtype=float))
                for i, (t, g) in enumerate(zip(trajectories, p_g, strict=True))
            ]
            result = estimate_rho(
                case, scenarios, RhoMode(mode), settings.mcheck, settings.solver.enumeration_cap
            )
        except (ToposhiftError, OSError, ValueError) as e:
            return _error(e)
        return rounded(rho_document(result))

    return server
