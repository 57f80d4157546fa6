"""Exception hierarchy shared by the library, the CLI and the MCP server.

Every class carries a stable ``code`` that ends up in error envelopes and
decides the CLI exit status.
"""


class ToposhiftError(Exception):
    """Base class for all toposhift errors."""

    code = "ERROR"


class CaseError(ToposhiftError, ValueError):
    """Case data or topology vector is inconsistent."""

    code = "INVALID_CASE"


class DisconnectedError(ToposhiftError):
    """The switched-on subgraph does not span every bus."""

    code = "DISCONNECTED"

    def __init__(self, message: str = "disconnected"):
        super().__init__(message)


class PowerImbalanceError(ToposhiftError):
    """Generation and load do not balance."""

    code = "POWER_IMBALANCE"

    def __init__(self, message: str = "power imbalance"):
        super().__init__(message)


class EnumerationTooLargeError(ToposhiftError):
    """A switch batch is too large to enumerate its intermediate variants."""

    code = "ENUMERATION_TOO_LARGE"


class ModelError(ToposhiftError, ValueError):
    """Malformed MILP model or misuse of a sealed model."""

    code = "INVALID_MODEL"


class WarmStartError(ToposhiftError, ValueError):
    """Warm-start assignment is not feasible for the model."""

    code = "INVALID_WARM_START"


class TooManyBinariesError(ToposhiftError):
    """Brute-force enumeration refused."""

    code = "TOO_MANY_BINARIES"


class SolverBridgeError(ToposhiftError):
    """External solver command failed or returned an unreadable solution."""

    code = "SOLVER_BRIDGE"


class ConfigError(ToposhiftError, ValueError):
    code = "INVALID_CONFIG"


class InfeasibleError(ToposhiftError):
    code = "INFEASIBLE"


class LimitReachedError(ToposhiftError):
    code = "LIMIT_REACHED"
