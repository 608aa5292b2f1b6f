"""Plain gradient descent for the inner and outer loops."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class ConvergenceError(RuntimeError):
    """An iterative procedure stopped without meeting its tolerance.

    Carries whatever diagnostics the failing routine had: ``residual`` (final
    condition norm), ``iterations`` and ``last`` (last finite iterate).
    """

    def __init__(self, message: str, *, residual: float = math.nan, iterations: int = 0, last=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.last = last


@dataclass(frozen=True)
class GDConfig:
    learning_rate: float = 0.05
    max_iter: int = 5000
    tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.tol < 0:
            raise ValueError(f"tol must be non-negative, got {self.tol}")
        if self.max_iter < 0:
            raise ValueError(f"max_iter must be non-negative, got {self.max_iter}")


@dataclass
class OptimTrace:
    """Per-iteration ``(iteration, objective, grad_norm)`` records and the outcome.

    ``grad_norm`` is the max-abs norm of the gradient at the recorded point.
    """

    iterates: list[tuple[int, float, float]] = field(default_factory=list)
    converged: bool = False
    final_point: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        """Number of update steps taken (records minus the initial one)."""
        return max(len(self.iterates) - 1, 0)

    @property
    def final_objective(self) -> float:
        return self.iterates[-1][1]

    @property
    def final_grad_norm(self) -> float:
        return self.iterates[-1][2]


def minimize(
    objective: Callable[[np.ndarray], float] | None,
    gradient: Callable[[np.ndarray], np.ndarray],
    x0,
    cfg: GDConfig,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> OptimTrace:
    """Gradient descent ``x <- x - lr * grad(x)`` until ``max|grad| <= tol`` or ``max_iter`` steps.

    If ``objective`` is None, ``gradient`` must return ``(value, grad)``, which
    lets callers compute both from one batch of circuit evaluations.

    Raises:
        ConvergenceError: if the objective or gradient becomes non-finite. The
            last finite iterate is attached as ``last``.
    """
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    trace = OptimTrace()
    for it in range(cfg.max_iter + 1):
        if objective is None:
            f, g = gradient(x)
        else:
            f, g = objective(x), gradient(x)
        f = float(f)
        g = np.asarray(g, dtype=float)
        gnorm = float(np.max(np.abs(g), initial=0.0))
        if not (math.isfinite(f) and np.all(np.isfinite(g))):
            raise ConvergenceError(
                f"non-finite objective or gradient at iteration {it}", iterations=it, last=x.copy()
            )
        trace.iterates.append((it, f, gnorm))
        if callback is not None:
            callback(it, x)
        if gnorm <= cfg.tol:
            trace.converged = True
            break
        if it == cfg.max_iter:
            break
        x = x - cfg.learning_rate * g
    trace.final_point = x
    return trace
