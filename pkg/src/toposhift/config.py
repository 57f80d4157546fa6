"""Configuration models and loading.

Settings come from a TOML or JSON file given with ``--config``, else from the
file named by ``TOPOSHIFT_CONFIG``, else from the defaults below.
"""

import json
import os
import sys
from enum import Enum
from pathlib import Path

from fastmcp.utilities.logging import get_logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from toposhift.errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

logger = get_logger(__name__)

CONFIG_ENV_VAR = "TOPOSHIFT_CONFIG"

# Minimum ratio between adjacent weight tiers of the transition objective.
WEIGHT_SEPARATION = 1e3


class SwitchingMode(str, Enum):
    SS = "ss"
    AS = "as"


class BoundednessVariant(str, Enum):
    L1 = "l1"
    QUADRATIC_EXPORT = "quadratic-export"


class PropertyWeights(BaseModel):
    """Scaling of the monitored properties (branch flows and angle differences)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    flow: float = Field(default=1.0, ge=0)
    angle: float = Field(default=0.0, ge=0)


class OttConfig(BaseModel):
    """Parameters of the transition problems."""

    model_config = ConfigDict(extra="forbid", frozen=True, use_enum_values=False)

    T_u: int = Field(default=2, ge=1)
    mode: SwitchingMode = SwitchingMode.SS
    alpha_p: float = Field(default=1e9, ge=0)
    alpha_c: float = Field(default=1e6, ge=0)
    alpha_b: float = Field(default=1.0, ge=0)
    alpha_v: float = Field(default=1.0, ge=0)
    alpha_n: float = Field(default=1e-3, ge=0)
    w_b: PropertyWeights = PropertyWeights()
    w_v: PropertyWeights = PropertyWeights()
    n_e: int = Field(default=0, ge=0)
    durations: list[float] = Field(default_factory=list)
    big_m_floor: float = Field(default=1e4, gt=0)
    boundedness: BoundednessVariant = BoundednessVariant.L1
    necessary_only: bool = False
    cost_segments: int = Field(default=8, ge=1)

    @model_validator(mode="after")
    def _check_weight_tiers(self) -> "OttConfig":
        if any(d <= 0 for d in self.durations):
            raise ValueError("durations must be positive")
        if self.alpha_p < WEIGHT_SEPARATION * self.alpha_c:
            raise ValueError("alpha_p must be at least 1e3 * alpha_c")
        if self.alpha_c < WEIGHT_SEPARATION * max(self.alpha_b, self.alpha_v):
            raise ValueError("alpha_c must be at least 1e3 * max(alpha_b, alpha_v)")
        if min(self.alpha_b, self.alpha_v) < WEIGHT_SEPARATION * self.alpha_n:
            raise ValueError("min(alpha_b, alpha_v) must be at least 1e3 * alpha_n")
        return self

    def duration(self, t: int) -> float:
        """Duration of transitional topology ``t`` (1-based); missing entries are 1."""
        if 1 <= t <= len(self.durations):
            return self.durations[t - 1]
        return 1.0


class SolverSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    gap: float = Field(default=1e-6, gt=0)
    integrality_tol: float = Field(default=1e-6, gt=0)
    feasibility_tol: float = Field(default=1e-7, gt=0)
    node_limit: int = Field(default=1_000_000, ge=1)
    workers: int = Field(default=1, ge=1)
    enumeration_cap: int = Field(default=20, ge=0)
    brute_force_cap: int = Field(default=22, ge=0)
    time_limit: float | None = Field(default=None, gt=0)
    external_command: list[str] | None = None


class DriverSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    iteration_cap: int = Field(default=10, ge=1)
    horizon_step: int = Field(default=2, ge=1)


class MonteCarloSettings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    samples: int = Field(default=10_000, ge=1)
    seed: int = 0


class Settings(BaseModel):
    """All configuration sections."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    ott: OttConfig = OttConfig()
    solver: SolverSettings = SolverSettings()
    driver: DriverSettings = DriverSettings()
    mcheck: MonteCarloSettings = MonteCarloSettings()


def _read_document(path: Path) -> dict:
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e.strerror or e}") from e
    try:
        if path.suffix.lower() == ".json":
            return json.loads(raw.decode("utf-8"))
        return tomllib.loads(raw.decode("utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"Cannot parse config file {path}: {e}") from e


def load_settings(path: Path | None = None) -> Settings:
    """Load settings: explicit path > TOPOSHIFT_CONFIG > defaults.

    Raises:
        ConfigError: If the file cannot be read or holds invalid values.
    """
    if path is None:
        env_path = os.environ.get(CONFIG_ENV_VAR)
        if env_path:
            path = Path(env_path)

    if path is None:
        logger.debug("No config file, using defaults")
        return Settings()

    document = _read_document(path)
    try:
        settings = Settings.model_validate(document)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {e}") from e
    logger.info(f"Loaded config from {path}")
    return settings
