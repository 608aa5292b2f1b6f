"""Per-layer regularization strengths of a re-uploading classifier tuned by hypergradients.

Inner problem: train the weights ``z`` on

    L_T(z, s) = BCE_train(z) + sum_l exp(s_l) * ||z_l||^2

where ``z_l`` is the weight block of layer ``l`` (blocks ``1..L``; block 0 is
left unpenalized). Outer problem: descend the validation cross-entropy
``L_V(z*(s))`` in the log-penalties ``s`` using ``dL_V/ds = dz*/ds . dL_V/dz``
from an implicit VJP.

Cross-entropy derivatives are built from exact shift-rule derivatives of the
class probability ``p(z, x) = |<0|U(z, x)|0>|^2`` plus the chain rule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..circuits import ParamCircuit, classifier_probability, normalize_features, reuploading_circuit
from ..diff import shift_jacobian, shift_second
from ..implicit import LinearSolveConfig, OptimalityProblem, implicit_vjp, solve_map
from ..optim import ConvergenceError, GDConfig
from .results import HyperoptResult, HyperoptStep

logger = logging.getLogger(__name__)

P_CLIP = 1e-12


def circles_dataset(
    n_points: int, seed: int, inner_radius: float = 0.4, outer_radius: float = 0.85, noise: float = 0.1
) -> tuple[np.ndarray, np.ndarray]:
    """Two concentric noisy circles in ``[-1, 1]^2``.

    Each point picks its class with probability 1/2; class 1 lies on the inner
    circle, class 0 on the outer one. Radii get Gaussian noise of width
    ``noise`` and coordinates are clipped to the square.
    """
    rng = np.random.default_rng(seed)
    y = (rng.random(n_points) < 0.5).astype(float)
    r = np.where(y == 1, inner_radius, outer_radius) + rng.normal(0.0, noise, n_points)
    theta = rng.uniform(0.0, 2 * np.pi, n_points)
    x = np.clip(np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1), -1.0, 1.0)
    return x, y


@dataclass(frozen=True)
class CrossEntropy:
    """Mean binary cross-entropy of the classifier on a fixed dataset.

    The circuit's probability of measuring ``|0>`` is the predicted probability
    of label 1. Probabilities are clipped to ``[1e-12, 1 - 1e-12]``.
    """

    circuit: ParamCircuit
    features: np.ndarray
    labels: np.ndarray

    def probabilities(self, Z: np.ndarray) -> np.ndarray:
        """``(m, N)`` class-1 probabilities for ``m`` weight rows."""
        Z = np.atleast_2d(Z)
        m, N = Z.shape[0], self.features.shape[0]
        p = classifier_probability(self.circuit, np.repeat(Z, N, axis=0), np.tile(self.features, (m, 1)))
        return p.reshape(m, N)

    def _dloss(self, p):
        y = self.labels
        pc = np.clip(p, P_CLIP, 1 - P_CLIP)
        value = -np.mean(y * np.log(pc) + (1 - y) * np.log(1 - pc))
        d1 = -(y / pc - (1 - y) / (1 - pc)) / y.shape[0]
        d2 = (y / pc**2 + (1 - y) / (1 - pc) ** 2) / y.shape[0]
        return value, d1, d2

    def value(self, z) -> float:
        return float(self._dloss(self.probabilities(z)[0])[0])

    def value_and_grad(self, z) -> tuple[float, np.ndarray]:
        z = np.asarray(z, dtype=float)
        shift = np.ones(z.shape[0], dtype=bool)
        p, jac = shift_jacobian(self.probabilities, z, shift, with_value=True)
        value, d1, _ = self._dloss(p)
        return float(value), jac @ d1

    def hessian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        d = z.shape[0]
        shift = np.ones(d, dtype=bool)
        p, jac = shift_jacobian(self.probabilities, z, shift, with_value=True)
        _, d1, d2 = self._dloss(p)
        idx = np.arange(d)
        hp = shift_second(self.probabilities, z, idx, idx, shift)
        hess = (jac * d2) @ jac.T + hp @ d1
        return 0.5 * (hess + hess.T)


@dataclass(frozen=True)
class RegularizedTraining:
    """Training loss with per-group ridge penalties ``exp(s_l) ||z_{g_l}||^2``."""

    loss: CrossEntropy
    groups: tuple[tuple[int, ...], ...]

    @property
    def dim_z(self) -> int:
        return self.loss.circuit.n_trainable

    def _mask(self) -> np.ndarray:
        mask = np.zeros((len(self.groups), self.dim_z))
        for l, g in enumerate(self.groups):
            mask[l, list(g)] = 1.0
        return mask

    def value_and_grad(self, z, s) -> tuple[float, np.ndarray]:
        w = np.exp(np.asarray(s, dtype=float)) @ self._mask()
        value, g = self.loss.value_and_grad(z)
        return value + float(np.sum(w * z**2)), g + 2 * w * z

    def problem(self) -> OptimalityProblem:
        mask = self._mask()

        def jacobian_z(z, s):
            return self.loss.hessian(z) + np.diag(2 * np.exp(s) @ mask)

        def jacobian_a(z, s):
            # d/ds_l of 2 exp(s_l) z on group l
            return (2 * np.exp(s)[:, None] * mask * z[None, :]).T

        return OptimalityProblem(
            f=lambda z, s: self.value_and_grad(z, s)[1],
            dim_z=self.dim_z,
            dim_a=len(self.groups),
            kind="root",
            jacobian_z=jacobian_z,
            jacobian_a=jacobian_a,
            value_and_f=self.value_and_grad,
        )


def hypergradient(
    train: RegularizedTraining, val: CrossEntropy, z_star, s, cfg: LinearSolveConfig, check_tol: float
) -> np.ndarray:
    """``dL_V/ds`` at a trained optimum ``z*(s)``."""
    _, gv = val.value_and_grad(z_star)
    return implicit_vjp(train.problem(), z_star, s, gv, cfg, check_tol=check_tol)


def setup(layers: int, n_train: int, n_val: int, seed: int):
    """Circuit, training objective and validation loss for a seeded dataset."""
    circuit = reuploading_circuit(layers)
    x_tr, y_tr = circles_dataset(n_train, seed)
    x_va, y_va = circles_dataset(n_val, seed + 1)
    train = RegularizedTraining(CrossEntropy(circuit, normalize_features(x_tr), y_tr), circuit.groups[1:])
    val = CrossEntropy(circuit, normalize_features(x_va), y_va)
    return circuit, train, val


def run_hyperopt(
    layers: int = 5,
    n_train: int = 200,
    n_val: int = 100,
    outer_steps: int = 30,
    inner: GDConfig | None = None,
    outer_lr: float = 0.01,
    seed: int = 0,
    *,
    cfg: LinearSolveConfig | None = None,
    init_penalty: float = 0.01,
    grid_size: int = 21,
) -> HyperoptResult:
    """Tune one ridge penalty per layer by gradient descent on the validation loss.

    Args:
        layers: re-uploading layers; there is one penalty per layer.
        n_train, n_val: sizes of the seeded concentric-circles training and
            validation sets (validation uses ``seed + 1``).
        outer_steps: hyperparameter updates.
        inner: weight-training settings; each outer step warm-starts from the
            previous weights.
        outer_lr: step size on the log-penalties.
        seed: dataset and weight-initialization seed.
        cfg: linear solver for the hypergradient.
        init_penalty: common starting value of every penalty.
        grid_size: resolution of the decision-surface probabilities.

    Raises:
        ConvergenceError: the weight training did not reach ``inner.tol``;
            the error message names the outer step.
    """
    inner = inner or GDConfig(learning_rate=0.5, max_iter=20000, tol=1e-8, seed=seed)
    cfg = cfg or LinearSolveConfig()
    if not init_penalty > 0:
        raise ValueError("init_penalty must be positive")
    circuit, train, val = setup(layers, n_train, n_val, seed)
    problem = train.problem()
    s = np.full(len(train.groups), np.log(init_penalty))
    z = np.random.default_rng(seed).uniform(-np.pi, np.pi, circuit.n_trainable)

    steps: list[HyperoptStep] = []
    for t in range(outer_steps + 1):
        try:
            z, trace = solve_map(problem, s, z, inner, return_trace=True)
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"outer step {t}: {exc}", residual=exc.residual, iterations=exc.iterations, last=exc.last
            ) from exc
        train_loss = train.loss.value(z)
        val_loss = val.value(z)
        steps.append(HyperoptStep(val_loss, np.exp(s), train_loss))
        logger.info("step %d: val %.6f train %.6f penalties %s", t, val_loss, train_loss, np.exp(s).round(5))
        if t == outer_steps:
            break
        s = s - outer_lr * hypergradient(train, val, z, s, cfg, check_tol=inner.tol)

    ticks = np.linspace(-1.0, 1.0, grid_size)
    grid = np.array([(u, v) for v in ticks for u in ticks])
    probs = classifier_probability(circuit, z[None, :], normalize_features(grid))
    metadata = {
        "experiment": "hyperopt",
        "layers": layers,
        "n_train": n_train,
        "n_val": n_val,
        "dataset": "concentric circles: radii 0.4 (label 1) and 0.85 (label 0), radial noise 0.1",
        "outer_steps": outer_steps,
        "outer_lr": outer_lr,
        "init_penalty": init_penalty,
        "penalty": "exp(s_l) * ||z_l||^2 on blocks 1..L, block 0 unpenalized",
        "inner": {"learning_rate": inner.learning_rate, "max_iter": inner.max_iter, "tol": inner.tol},
        "solver": cfg.method,
        "damping": cfg.damping,
        "seed": seed,
    }
    return HyperoptResult(steps, grid, probs, z, metadata)
