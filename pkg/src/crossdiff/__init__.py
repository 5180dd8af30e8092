"""Implicit finite-difference solver for triangular cross-diffusion
competition systems with runtime checks of the a-priori estimates."""

__version__ = "0.1.0"

from .grid import Field, Grid
from .model import Inadmissible, ParamSet, RegimeTag, invert_A, map_A, validate_params
from .stepper import SchemeConfig, State, Trajectory, initial_lift, run, step

__all__ = [
    "Field", "Grid", "Inadmissible", "ParamSet", "RegimeTag", "SchemeConfig", "State",
    "Trajectory", "initial_lift", "invert_A", "map_A", "run", "step", "validate_params",
]
