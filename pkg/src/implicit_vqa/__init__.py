"""Implicit differentiation for variational quantum algorithms on a statevector simulator."""

from .optim import ConvergenceError, GDConfig, OptimTrace, minimize
from .implicit import (
    LinearSolveConfig,
    OptimalityProblem,
    implicit_jacobian,
    implicit_vjp,
    solve_linear,
    solve_map,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "GDConfig",
    "LinearSolveConfig",
    "OptimTrace",
    "OptimalityProblem",
    "implicit_jacobian",
    "implicit_vjp",
    "minimize",
    "solve_linear",
    "solve_map",
]
