"""Implicit differentiation of solution maps.

A solution map ``z*(a)`` is defined either by a root condition
``f(z*(a), a) = 0`` or by a fixed-point condition ``f(z*(a), a) = z*(a)``.
With ``A = df/dz`` and ``B = df/da`` at the solution,

* root:        ``dz*/da = -(A + lam I)^{-1} B``
* fixed point: ``dz*/da = (I - A + lam I)^{-1} B``

where ``lam`` is an optional Tikhonov damping. Vector-Jacobian products never
form the inverse; they solve one linear system with the transposed operator
(direct, CG, GMRES or a truncated Neumann series) and contract with ``B``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse import linalg as spla

from . import diff
from .diff import ScalarField
from .optim import ConvergenceError, GDConfig, OptimTrace, minimize

logger = logging.getLogger(__name__)

METHODS = ("direct", "cg", "gmres", "neumann")


@dataclass(frozen=True)
class LinearSolveConfig:
    """How to apply the inverse in implicit products.

    ``neumann_step`` scales the Neumann/Richardson iteration
    ``x <- x + step * (b - M x)``; None picks ``1 / ||M||`` from a few power
    iterations so that the series converges for symmetric positive-definite
    ``M``.
    """

    method: str = "gmres"
    tol: float = 1e-10
    max_iter: int = 1000
    damping: float = 1e-6
    neumann_terms: int = 50
    neumann_step: float | None = None

    def __post_init__(self):
        method = self.method.lower()
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        object.__setattr__(self, "method", method)
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.damping < 0:
            raise ValueError(f"damping must be non-negative, got {self.damping}")
        if self.max_iter < 1 or self.neumann_terms < 1:
            raise ValueError("max_iter and neumann_terms must be positive")


@dataclass(frozen=True)
class OptimalityProblem:
    """A solution condition together with its partial Jacobians.

    Attributes:
        f: ``(z, a) -> vector`` of length ``dim_z``.
        kind: ``"root"`` for ``f = 0`` or ``"fixed_point"`` for ``f = z``.
        jacobian_z: ``(z, a) -> (dim_z, dim_z)`` matrix ``df/dz``.
        jacobian_a: ``(z, a) -> (dim_z, dim_a)`` matrix ``df/da``.
        objective: for root problems that are stationarity conditions, the
            scalar being minimized; :func:`solve_map` descends on it.
        value_and_f: optional ``(z, a) -> (objective, f)`` computed together.

    Missing Jacobians are filled in with central finite differences of ``f``.
    """

    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dim_z: int
    dim_a: int
    kind: str = "root"
    jacobian_z: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    jacobian_a: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    objective: Callable[[np.ndarray, np.ndarray], float] | None = None
    value_and_f: Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray]] | None = None

    def __post_init__(self):
        if self.kind not in ("root", "fixed_point"):
            raise ValueError(f"kind must be 'root' or 'fixed_point', got {self.kind!r}")

    @classmethod
    def from_field(cls, field: ScalarField) -> OptimalityProblem:
        """Stationarity ``grad_z E(z, a) = 0`` of a field, with shift-rule Jacobians."""
        return cls(
            f=lambda z, a: diff.grad_z(field, z, a),
            dim_z=field.dim_z,
            dim_a=field.dim_a,
            kind="root",
            jacobian_z=lambda z, a: diff.hessian_zz(field, z, a),
            jacobian_a=lambda z, a: diff.mixed_jacobian_za(field, z, a).T,
            objective=field,
            value_and_f=lambda z, a: diff.value_and_grad_z(field, z, a),
        )

    def residual(self, z, a) -> float:
        """Max-abs violation of the solution condition."""
        r = np.asarray(self.f(z, a), dtype=float)
        if self.kind == "fixed_point":
            r = r - np.asarray(z, dtype=float)
        return float(np.max(np.abs(r), initial=0.0))

    def A(self, z, a) -> np.ndarray:
        if self.jacobian_z is not None:
            return np.asarray(self.jacobian_z(z, a), dtype=float).reshape(self.dim_z, self.dim_z)
        return _fd_jacobian(lambda x: self.f(x, a), z).reshape(self.dim_z, self.dim_z)

    def B(self, z, a) -> np.ndarray:
        if self.jacobian_a is not None:
            return np.asarray(self.jacobian_a(z, a), dtype=float).reshape(self.dim_z, self.dim_a)
        return _fd_jacobian(lambda x: self.f(z, x), a).reshape(self.dim_z, self.dim_a)


def _fd_jacobian(fun, x, eps: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    cols = []
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = eps
        cols.append((np.asarray(fun(x + e), dtype=float) - np.asarray(fun(x - e), dtype=float)) / (2 * eps))
    return np.stack(cols, axis=-1)


# --- linear solves ---------------------------------------------------------------


def _power_norm(A_apply, n: int, iters: int = 30) -> float:
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = A_apply(v)
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


def solve_linear(A_apply: Callable[[np.ndarray], np.ndarray], b, cfg: LinearSolveConfig) -> np.ndarray:
    """Solve ``M x = b`` given only the action ``x -> M x``.

    Success means ``||M x - b||_2 <= tol * max(1, ||b||_2)``.

    Raises:
        ConvergenceError: CG/GMRES hit ``max_iter``, the Neumann series
            diverged, or the final residual check failed.
    """
    b = np.asarray(b, dtype=float).reshape(-1)
    n = b.shape[0]
    bnorm = float(np.linalg.norm(b))
    threshold = cfg.tol * max(1.0, bnorm)
    if bnorm == 0.0:
        return np.zeros(n)

    if cfg.method == "direct":
        M = np.column_stack([A_apply(e) for e in np.eye(n)])
        try:
            x = np.linalg.solve(M, b)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular system: {exc}", residual=bnorm) from exc
        iterations = 1
    elif cfg.method in ("cg", "gmres"):
        # scipy may write into the returned array, so never hand back a caller's buffer
        op = spla.LinearOperator((n, n), matvec=lambda v: np.array(A_apply(v), dtype=float), dtype=float)
        count = [0]

        def tick(_):
            count[0] += 1

        if cfg.method == "cg":
            x, info = spla.cg(op, b, rtol=cfg.tol, atol=cfg.tol, maxiter=cfg.max_iter, callback=tick)
        else:
            x, info = spla.gmres(
                op,
                b,
                rtol=cfg.tol,
                atol=cfg.tol,
                restart=min(n, cfg.max_iter),
                maxiter=cfg.max_iter,
                callback=tick,
                callback_type="pr_norm",
            )
        iterations = count[0]
        if info > 0:
            res = float(np.linalg.norm(A_apply(x) - b))
            raise ConvergenceError(
                f"{cfg.method} did not converge in {iterations} iterations (residual {res:.3e})",
                residual=res,
                iterations=iterations,
                last=x,
            )
    else:
        x, iterations = _neumann(A_apply, b, cfg, threshold)

    res = float(np.linalg.norm(A_apply(x) - b))
    if not np.isfinite(res):
        raise ConvergenceError(f"{cfg.method} produced a non-finite solution", residual=res, iterations=iterations)
    if res > threshold:
        if cfg.method == "neumann":
            warnings.warn(
                f"Neumann series truncated at {iterations} terms with residual {res:.3e}",
                RuntimeWarning,
                stacklevel=2,
            )
        # iterative solvers test a preconditioned/recurrence residual; allow
        # a small slack for rounding before declaring failure
        elif res > 10 * threshold:
            raise ConvergenceError(
                f"{cfg.method} residual {res:.3e} exceeds {threshold:.3e}",
                residual=res,
                iterations=iterations,
                last=x,
            )
    logger.debug("solve_linear %s: %d iterations, residual %.3e", cfg.method, iterations, res)
    return x


def _neumann(A_apply, b, cfg: LinearSolveConfig, threshold: float) -> tuple[np.ndarray, int]:
    """Truncated series ``x = step * sum_k (I - step M)^k b``."""
    step = cfg.neumann_step
    if step is None:
        norm = _power_norm(A_apply, b.shape[0])
        if norm == 0.0:
            raise ConvergenceError("Neumann series on a zero operator")
        step = 1.0 / norm
    term = step * b
    x = term.copy()
    first = float(np.linalg.norm(term))
    k = 0
    for k in range(1, cfg.neumann_terms):
        term = term - step * A_apply(term)
        x = x + term
        tnorm = float(np.linalg.norm(term))
        if not np.isfinite(tnorm) or tnorm > 1e3 * first:
            raise ConvergenceError(
                f"Neumann series diverges (term norm {tnorm:.3e} after {k} terms)",
                residual=tnorm,
                iterations=k,
            )
        if tnorm <= 1e-3 * threshold * step:
            if float(np.linalg.norm(A_apply(x) - b)) <= threshold:
                break
    return x, k + 1


# --- implicit products -----------------------------------------------------------


def _check_solution(problem: OptimalityProblem, z, a, tol: float):
    res = problem.residual(z, a)
    if res > 10 * tol:
        warnings.warn(
            f"solution condition violated: residual {res:.3e} > 10 * tol ({10 * tol:.1e}); "
            "implicit gradients will be biased",
            RuntimeWarning,
            stacklevel=3,
        )
    return res


def _operator(problem: OptimalityProblem, A: np.ndarray, damping: float, transpose: bool):
    M = A.T if transpose else A
    if problem.kind == "root":
        return lambda x: M @ x + damping * x
    return lambda x: x - M @ x + damping * x


def implicit_jacobian(
    problem: OptimalityProblem,
    z0,
    a0,
    cfg: LinearSolveConfig | None = None,
    *,
    check_tol: float = 1e-6,
) -> np.ndarray:
    """``dz*/da`` at a solution, returned with shape ``(dim_a, dim_z)``: row ``k``
    is the sensitivity of the solution to ``a_k``.

    Assembled column by column with one linear solve per parameter.
    """
    cfg = cfg or LinearSolveConfig()
    z0 = np.asarray(z0, dtype=float).reshape(-1)
    a0 = np.asarray(a0, dtype=float).reshape(-1)
    _check_solution(problem, z0, a0, check_tol)
    A = problem.A(z0, a0)
    B = problem.B(z0, a0)
    apply = _operator(problem, A, cfg.damping, transpose=False)
    sign = -1.0 if problem.kind == "root" else 1.0
    cols = [sign * solve_linear(apply, B[:, k], cfg) for k in range(problem.dim_a)]
    return np.array(cols).reshape(problem.dim_a, problem.dim_z)


def implicit_vjp(
    problem: OptimalityProblem,
    z0,
    a0,
    v,
    cfg: LinearSolveConfig | None = None,
    *,
    check_tol: float = 1e-6,
    A: np.ndarray | None = None,
    B: np.ndarray | None = None,
) -> np.ndarray:
    """``v^T dz*/da`` as a vector of length ``dim_a``.

    Root problems solve ``(A + lam I)^T u = v`` and return ``-B^T u``;
    fixed-point problems solve ``u = v + (A - lam I)^T u`` and return ``B^T u``.
    Precomputed ``A``/``B`` may be passed to avoid re-evaluating them.
    """
    cfg = cfg or LinearSolveConfig()
    z0 = np.asarray(z0, dtype=float).reshape(-1)
    a0 = np.asarray(a0, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != problem.dim_z:
        raise ValueError(f"v has length {v.shape[0]}, expected {problem.dim_z}")
    if not np.all(np.isfinite(v)):
        raise ValueError("v must be finite")
    _check_solution(problem, z0, a0, check_tol)
    A = problem.A(z0, a0) if A is None else np.asarray(A, dtype=float)
    B = problem.B(z0, a0) if B is None else np.asarray(B, dtype=float)
    u = solve_linear(_operator(problem, A, cfg.damping, transpose=True), v, cfg)
    out = B.T @ u
    return -out if problem.kind == "root" else out


def solve_map(problem: OptimalityProblem, a, z_init, inner: GDConfig, *, return_trace: bool = False):
    """Find ``z*(a)`` with the inner solver.

    Root problems descend on ``problem.objective`` (whose gradient is ``f``);
    fixed-point problems iterate ``z <- f(z, a)``.

    Raises:
        ConvergenceError: the condition norm is still above ``inner.tol`` after
            ``inner.max_iter`` steps; ``last`` holds the final iterate.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    z = np.asarray(z_init, dtype=float).reshape(-1)
    if problem.kind == "fixed_point":
        trace = OptimTrace()
        for it in range(inner.max_iter + 1):
            z_next = np.asarray(problem.f(z, a), dtype=float)
            res = float(np.max(np.abs(z_next - z), initial=0.0))
            trace.iterates.append((it, res, res))
            if res <= inner.tol:
                trace.converged = True
                break
            if it < inner.max_iter:
                z = z_next
        trace.final_point = z
    else:
        if problem.value_and_f is not None:
            trace = minimize(None, lambda x: problem.value_and_f(x, a), z, inner)
        elif problem.objective is not None:
            trace = minimize(lambda x: problem.objective(x, a), lambda x: problem.f(x, a), z, inner)
        else:
            raise ValueError("root problems need an objective to descend on")
    if not trace.converged:
        res = trace.final_grad_norm
        raise ConvergenceError(
            f"inner solver stopped after {trace.n_steps} steps with condition norm {res:.3e} > {inner.tol:.1e}",
            residual=res,
            iterations=trace.n_steps,
            last=trace.final_point,
        )
    return (trace.final_point, trace) if return_trace else trace.final_point
