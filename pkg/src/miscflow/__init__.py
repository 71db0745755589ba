"""Finite-volume simulator for miscible displacement with measure-valued wells."""

from .config import SimConfig, load_config, parse_config, preset
from .errors import ConfigError, HypothesisError, MaximumPrincipleError, SolverError
from .grid import Grid, build_grid, cell_of_point
from .transport import Model, SimState, SolverSettings, init_state, simulate, step
from .verify import audit_run, manufactured_convergence, regularization_sweep, truncation_sweep

__all__ = [
    "ConfigError", "Grid", "HypothesisError", "MaximumPrincipleError", "Model", "SimConfig",
    "SimState", "SolverError", "SolverSettings", "audit_run", "build_grid", "cell_of_point",
    "init_state", "load_config", "manufactured_convergence", "parse_config", "preset",
    "regularization_sweep", "simulate", "step", "truncation_sweep",
]
__version__ = "0.1.0"
