"""Maximizing geometric entanglement through a nested product-state search.

The target state ``psi_a`` comes from a Rot + CNOT-ring circuit. The inner
problem finds the closest product state ``psi_z*`` by maximizing
``O(z, a) = |<psi_z|psi_a>|^2`` over a product ansatz; the entanglement is
``E(a) = 1 - O(z*(a), a)``. The outer loop descends ``L(a) = -log E(a)`` with
the total derivative

    dO/da = dO/da|_z + (dz*/da)^T dO/dz

where the implicit term comes from an implicit VJP on the inner optimality
condition. All partial derivatives use the shift rule: ``O`` is an
expectation value in both ``z`` and ``a``.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np

from ..circuits import entangler_ansatz, evaluate_batch, product_ansatz
from ..diff import ScalarField, grad_z, shift_jacobian
from ..implicit import LinearSolveConfig, OptimalityProblem, implicit_vjp, solve_map
from ..optim import ConvergenceError, GDConfig
from ..statevec import overlap_sq_batch
from .results import EntanglementResult, EntanglementStep

logger = logging.getLogger(__name__)

E_FLOOR = 1e-12


def overlap_field(n: int, entangler_layers: int = 1, sign: float = 1.0) -> ScalarField:
    """``sign * |<psi_z|psi_a>|^2`` with ``z`` on the product ansatz and ``a`` on the entangler."""
    prod = product_ansatz(n)
    ent = entangler_ansatz(n, entangler_layers)

    def batch(Z, A):
        return sign * overlap_sq_batch(evaluate_batch(prod, Z), evaluate_batch(ent, A))

    return ScalarField(batch, prod.n_trainable, ent.n_trainable, prod.shiftable_mask(), ent.shiftable_mask())


def _grad_a(field: ScalarField, z, a) -> np.ndarray:
    """Partial derivative in ``a`` at fixed ``z``."""
    fun = lambda A: field.batch(np.broadcast_to(z, (A.shape[0], field.dim_z)), A)
    return shift_jacobian(fun, a, field.shift_a)


def _clamped(E: float) -> float:
    if E <= E_FLOOR:
        warnings.warn(f"entanglement {E:.3e} at or below {E_FLOOR:g}; clamping, loss is capped", RuntimeWarning,
                      stacklevel=3)
        return E_FLOOR
    return E


def loss_and_grad(
    overlap: ScalarField,
    problem: OptimalityProblem,
    z_star,
    a,
    cfg: LinearSolveConfig,
    check_tol: float,
    *,
    implicit: bool = True,
) -> tuple[float, float, np.ndarray, dict[str, np.ndarray]]:
    """``(L, E, dL/da, parts)`` at an inner optimum; ``parts`` holds the direct and implicit terms of ``dO/da``."""
    E = _clamped(1.0 - overlap(z_star, a))
    direct = _grad_a(overlap, z_star, a)
    if implicit:
        v = grad_z(overlap, z_star, a)
        indirect = implicit_vjp(problem, z_star, a, v, cfg, check_tol=check_tol)
    else:
        indirect = np.zeros_like(direct)
    dO = direct + indirect
    # L = -log(1 - O)  =>  dL/da = dO/da / E
    return -np.log(E), E, dO / E, {"direct": direct, "implicit": indirect}


def run_entanglement(
    n: int = 2,
    entangler_layers: int = 1,
    outer_steps: int = 2000,
    inner: GDConfig | None = None,
    outer_lr: float = 0.001,
    seed: int = 0,
    *,
    cfg: LinearSolveConfig | None = None,
    a_init=None,
    stop_measure: float | None = None,
) -> EntanglementResult:
    """Drive the entangler parameters toward maximal geometric entanglement.

    Args:
        n: qubits.
        entangler_layers: depth of the target-state circuit.
        outer_steps: gradient steps on ``a``.
        inner: settings for the product-state search (gradient descent on
            ``-O``), warm-started across outer steps.
        outer_lr: outer step size.
        seed: draws the initial ``a`` (unless ``a_init`` is given) and ``z``.
        cfg: linear solver for the implicit term.
        a_init: explicit starting parameters for the target state.
        stop_measure: stop early once ``E`` reaches this value.

    Returns:
        One record per evaluated ``a`` (initial point plus one per update).

    Inner searches that miss ``inner.tol`` do not abort the run; the step is
    recorded with ``inner_converged=False``.
    """
    inner = inner or GDConfig(learning_rate=1.0, max_iter=1000, tol=1e-9, seed=seed)
    cfg = cfg or LinearSolveConfig()
    overlap = overlap_field(n, entangler_layers)
    problem = OptimalityProblem.from_field(overlap_field(n, entangler_layers, sign=-1.0))
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 2 * np.pi, overlap.dim_a) if a_init is None else np.asarray(a_init, dtype=float).copy()
    if a.shape != (overlap.dim_a,):
        raise ValueError(f"a_init must have length {overlap.dim_a}")
    z = rng.uniform(0, 2 * np.pi, overlap.dim_z)

    steps: list[EntanglementStep] = []
    for t in range(outer_steps + 1):
        try:
            z = solve_map(problem, a, z, inner)
            converged = True
        except ConvergenceError as exc:
            # near maximal entanglement the closest product state becomes
            # degenerate and the inner search slows down; keep going from
            # the last iterate and flag the step
            logger.warning("outer step %d: %s", t, exc)
            z = exc.last
            converged = False
        check_tol = inner.tol if converged else np.inf
        loss, E, grad, _ = loss_and_grad(overlap, problem, z, a, cfg, check_tol=check_tol)
        steps.append(EntanglementStep(loss, E, converged))
        if t % 100 == 0:
            logger.info("step %d: E=%.6f loss=%.6f", t, E, loss)
        if t == outer_steps or (stop_measure is not None and E >= stop_measure):
            break
        a = a - outer_lr * grad

    ent = entangler_ansatz(n, entangler_layers)
    final_state = evaluate_batch(ent, a[None, :])[0].astype(complex)
    metadata = {
        "experiment": "entanglement",
        "n": n,
        "entangler_layers": entangler_layers,
        "outer_steps": outer_steps,
        "outer_lr": outer_lr,
        "inner": {"learning_rate": inner.learning_rate, "max_iter": inner.max_iter, "tol": inner.tol},
        "solver": cfg.method,
        "damping": cfg.damping,
        "seed": seed,
        "stop_measure": stop_measure,
    }
    return EntanglementResult(steps, final_state, a, float(overlap(z, a)), metadata)
