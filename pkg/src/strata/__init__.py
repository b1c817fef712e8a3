"""Layered stream simulations with evolutionary search and tournaments."""

__version__ = "0.1.0"

from .api import evaluate, optimize, simulate

__all__ = ["simulate", "optimize", "evaluate", "__version__"]
