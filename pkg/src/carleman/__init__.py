"""Kinetic Carleman solver, limiting diffusion solver and epsilon-sweep harness."""

__version__ = "0.1.0"

from .core import BoundaryData, BoundaryFunction, Grid1D, InitialData, KineticState
from .diffusion import DiffusionConfig, NewtonOptions, solve, steady_state
from .harness import SweepConfig, run_sweep
from .kinetic import KineticConfig, NumericalAbort, run

__all__ = [
    "BoundaryData",
    "BoundaryFunction",
    "DiffusionConfig",
    "Grid1D",
    "InitialData",
    "KineticConfig",
    "KineticState",
    "NewtonOptions",
    "NumericalAbort",
    "SweepConfig",
    "run",
    "run_sweep",
    "solve",
    "steady_state",
]
