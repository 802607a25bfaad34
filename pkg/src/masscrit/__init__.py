"""Numerical laboratory for mass-critical normalized solutions of -Delta u + mu u = g(u)."""

from .grid import ProblemParams, RadialFunction, RadialGrid, build_grid, norms
from .nonlinearity import Nonlinearity, bump_family, make_profile_a, plateau_power, power, rho_family
from .shooting import compute_m1, find_ground_state

__all__ = [
    "ProblemParams", "RadialFunction", "RadialGrid", "build_grid", "norms",
    "Nonlinearity", "bump_family", "make_profile_a", "plateau_power", "power", "rho_family",
    "compute_m1", "find_ground_state",
]
