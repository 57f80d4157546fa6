"""Toposhift: optimal topology transition planning for switched power networks.

Computes sequences of line-switching batches that move a network from an
initial to a terminal topology while keeping it connected and within its
operational limits, and optionally co-optimizes the terminal topology.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("toposhift")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"
