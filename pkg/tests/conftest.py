"""Shared pytest fixtures for toposhift tests."""

import json
from pathlib import Path

import numpy as np
import pytest

from toposhift.config import OttConfig, Settings
from toposhift.grid import GridCase
from toposhift.server import create_server


def _branch(id, f, t, b=1.0, p_max=3.0, p_max_relaxed=4.0, theta_max=3.0, theta_max_relaxed=4.0, **extra):
    return {
        "id": id,
        "from": f,
        "to": t,
        "b": b,
        "p_max": p_max,
        "p_max_relaxed": p_max_relaxed,
        "theta_max": theta_max,
        "theta_max_relaxed": theta_max_relaxed,
        **extra,
    }


# Two buses joined by a fixed and a switchable parallel branch.
TWO_BUS = {
    "buses": [
        {"id": 1, "p_g_max": 2.0, "cost_linear": 1.0},
        {"id": 2, "p_d": 1.0},
    ],
    "branches": [
        _branch(0, 1, 2, b=10.0),
        _branch(1, 1, 2, b=30.0, switchable=True),
    ],
    "reference_bus": 1,
}

# Three equal parallel branches feeding a load of 2.
PARALLEL = {
    "buses": [
        {"id": 1, "p_g_max": 3.0, "cost_linear": 1.0},
        {"id": 2, "p_d": 2.0},
    ],
    "branches": [
        _branch(0, 1, 2, switchable=True, in_service=False),
        _branch(1, 1, 2, switchable=True),
        _branch(2, 1, 2, switchable=True, in_service=False),
    ],
    "reference_bus": 1,
}
PARALLEL_PG = [2.0, 0.0]

TRIANGLE = {
    "buses": [
        {"id": 1, "p_g_max": 3.0, "cost_linear": 1.0},
        {"id": 2, "p_d": 1.0},
        {"id": 3, "p_d": 1.0},
    ],
    "branches": [
        _branch(0, 1, 2, switchable=True),
        _branch(1, 2, 3, switchable=True),
        _branch(2, 1, 3, switchable=True),
    ],
    "reference_bus": 1,
}

# Five buses, two agents. Moving from FIVE_Z0 to FIVE_ZT in one batch leaves
# the intersection topology disconnected.
FIVE_BUS = {
    "buses": [
        {"id": 1, "p_g_max": 3.0, "cost_linear": 1.0},
        {"id": 2},
        {"id": 3, "p_d": 1.0},
        {"id": 4},
        {"id": 5, "p_d": 1.0},
    ],
    "branches": [
        _branch(0, 1, 2),
        _branch(1, 2, 3, switchable=True),
        _branch(2, 3, 4, switchable=True),
        _branch(3, 4, 5, switchable=True),
        _branch(4, 1, 5, switchable=True, in_service=False),
        _branch(5, 2, 4, switchable=True, in_service=False),
    ],
    "agents": [[1, 4], [2, 3, 5]],
    "reference_bus": 1,
}
FIVE_Z0 = [1, 1, 1, 1, 0, 0]
FIVE_ZT = [1, 0, 1, 0, 1, 1]
FIVE_PG = [2.0, 0.0, 0.0, 0.0, 0.0]

# Path 1-2-3-4; closing 4-1 while opening 3-4 has one disconnected variant
# out of three.
FOUR_BUS = {
    "buses": [
        {"id": 1, "p_g_max": 2.0, "cost_linear": 1.0},
        {"id": 2},
        {"id": 3},
        {"id": 4, "p_d": 1.0},
    ],
    "branches": [
        _branch(0, 1, 2, p_max=2.0, p_max_relaxed=3.0),
        _branch(1, 2, 3, p_max=2.0, p_max_relaxed=3.0),
        _branch(2, 3, 4, p_max=2.0, p_max_relaxed=3.0, switchable=True),
        _branch(3, 4, 1, p_max=2.0, p_max_relaxed=3.0, switchable=True, in_service=False),
    ],
    "reference_bus": 1,
}
FOUR_Z0 = [1, 1, 1, 0]
FOUR_ZT = [1, 1, 0, 1]
FOUR_PG = [1.0, 0.0, 0.0, 0.0]

# Cheap generator behind a weak branch. The OTS optimum closes 1-3 and opens
# 2-3 (cost 2), but every transition to it exceeds limits; holding the
# initial topology with an expensive dispatch costs 8.
_CRITICAL_LIMITS = {"b": 10.0, "theta_max": 0.5, "theta_max_relaxed": 0.6}
CRITICAL = {
    "buses": [
        {"id": 1, "p_g_max": 3.0, "cost_linear": 1.0},
        {"id": 2},
        {"id": 3, "p_d": 2.0, "p_g_max": 3.0, "cost_linear": 5.0},
    ],
    "branches": [
        _branch(0, 1, 2, p_max=5.0, p_max_relaxed=5.5, **_CRITICAL_LIMITS),
        _branch(1, 2, 3, p_max=0.5, p_max_relaxed=0.6, switchable=True, **_CRITICAL_LIMITS),
        _branch(2, 1, 3, p_max=2.5, p_max_relaxed=3.0, switchable=True, in_service=False, **_CRITICAL_LIMITS),
    ],
    "reference_bus": 1,
}
CRITICAL_Z0 = [1, 1, 0]
CRITICAL_ZT = [1, 0, 1]
CRITICAL_PG = [2.0, 0.0, 0.0]


@pytest.fixture
def two_bus() -> GridCase:
    return GridCase.model_validate(TWO_BUS)


@pytest.fixture
def triangle() -> GridCase:
    return GridCase.model_validate(TRIANGLE)


@pytest.fixture
def five_bus() -> GridCase:
    return GridCase.model_validate(FIVE_BUS)


@pytest.fixture
def four_bus() -> GridCase:
    return GridCase.model_validate(FOUR_BUS)


@pytest.fixture
def critical() -> GridCase:
    return GridCase.model_validate(CRITICAL)


@pytest.fixture
def ott_config() -> OttConfig:
    """Small, well-separated weights that keep the LPs well scaled."""
    return OttConfig(
        alpha_p=1e6,
        alpha_c=1e3,
        alpha_b=1.0,
        alpha_v=1.0,
        alpha_n=1e-3,
        big_m_floor=100.0,
    )


@pytest.fixture
def settings(ott_config: OttConfig) -> Settings:
    return Settings(ott=ott_config)


@pytest.fixture
def json_file(tmp_path: Path):
    """Factory fixture writing a JSON document under tmp_path."""

    def _write(name: str, payload) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def case_file(json_file):
    """Factory fixture writing one of the case documents to disk."""

    def _create(document: dict, name: str = "case.json") -> Path:
        return json_file(name, document)

    return _create


@pytest.fixture
def config_file(tmp_path: Path, ott_config: OttConfig) -> Path:
    """TOML settings file carrying the test weights."""
    path = tmp_path / "toposhift.toml"
    path.write_text(
        "[ott]\n"
        f"alpha_p = {ott_config.alpha_p}\n"
        f"alpha_c = {ott_config.alpha_c}\n"
        f"alpha_b = {ott_config.alpha_b}\n"
        f"alpha_v = {ott_config.alpha_v}\n"
        f"alpha_n = {ott_config.alpha_n}\n"
        f"big_m_floor = {ott_config.big_m_floor}\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture
def server_tools(settings: Settings):
    """Create a server instance and return its tools for testing.

    Returns a namespace object with tool functions that can be called directly.
    """
    server = create_server(settings)

    class Tools:
        pass

    tools = Tools()
    for tool_name, tool in server._tool_manager._tools.items():
        setattr(tools, tool_name, tool)
    return tools


def as_array(values) -> np.ndarray:
    return np.asarray(values, dtype=int)
