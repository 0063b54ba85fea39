"""Boundary-integral (Nyström) solvers for the remainder functions."""

from .quadrature import log_kernel_integral, poisson_kernel_integral
from .nystrom import (ExteriorProblem, InteriorProblem, K0Fit, NystromSystem, RemainderField,
                      SolverError, extrapolate_k0, solve_interior_remainder, stable_window)

__all__ = [
    "ExteriorProblem", "InteriorProblem", "K0Fit", "NystromSystem", "RemainderField",
    "SolverError", "extrapolate_k0", "log_kernel_integral", "poisson_kernel_integral",
    "solve_interior_remainder", "stable_window",
]
