"""Derivatives of circuit expectation values.

Slots generated by a single Pauli rotation are differentiated with the
two-term parameter-shift rule (shift pi/2), which is exact. Any other slot
falls back to central finite differences; callers can ask which slots did so
through ``full_output=True``.

All shifted points for one derivative are stacked into a single batch and
evaluated together.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .circuits import ParamCircuit, evaluate_batch
from .observables import ParameterizedHamiltonian, PauliSum
from .statevec import compile_pauli_sum, expectation_batch

SHIFT = np.pi / 2
FD_EPS = 1e-5
FD_EPS2 = 1e-4

BatchFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScalarField:
    """A deterministic map ``(z, a) -> float`` evaluated in batches.

    Attributes:
        batch: maps ``Z`` of shape ``(m, dim_z)`` and ``A`` of shape
            ``(m, dim_a)`` to ``(m,)`` values.
        dim_z, dim_a: argument sizes.
        shift_z: boolean mask of z-slots where the shift rule is exact.
        shift_a: same for a-slots; None means no a-slot is shiftable.
        a_terms: optional ``Z -> (m, dim_a)`` giving ``dE/da`` exactly when the
            field is affine in ``a`` (Hamiltonians ``H_0 + sum a_k H_k``).
    """

    batch: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dim_z: int
    dim_a: int
    shift_z: np.ndarray
    shift_a: np.ndarray | None = None
    a_terms: BatchFn | None = None

    def __call__(self, z, a=()) -> float:
        z, a = self._args(z, a)
        return float(self.batch(z[None, :], a[None, :])[0])

    def _args(self, z, a):
        z = np.asarray(z, dtype=float).reshape(-1)
        a = np.asarray(a, dtype=float).reshape(-1)
        if z.shape[0] != self.dim_z or a.shape[0] != self.dim_a:
            raise ValueError(
                f"field takes dim_z={self.dim_z}, dim_a={self.dim_a}; got {z.shape[0]}, {a.shape[0]}"
            )
        return z, a

    def along_z(self, a) -> BatchFn:
        a = np.asarray(a, dtype=float).reshape(1, -1)
        return lambda Z: self.batch(Z, np.broadcast_to(a, (Z.shape[0], self.dim_a)))

    def joint(self) -> tuple[BatchFn, np.ndarray]:
        """The field as a function of the concatenation ``[z, a]`` and its joint shift mask."""
        dz = self.dim_z
        shift_a = np.zeros(self.dim_a, dtype=bool) if self.shift_a is None else np.asarray(self.shift_a)
        return (lambda W: self.batch(W[:, :dz], W[:, dz:])), np.concatenate([self.shift_z, shift_a])


# --- generic batched rules -------------------------------------------------------


def _steps(shiftable: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot displacement and divisor: ``(f(x+h) - f(x-h)) / div`` is the derivative."""
    shiftable = np.asarray(shiftable, dtype=bool)
    h = np.where(shiftable, SHIFT, eps)
    div = np.where(shiftable, 2 * np.sin(SHIFT), 2 * eps)
    return h, div


def shift_jacobian(fun: BatchFn, x, shiftable, eps: float = FD_EPS, with_value: bool = False):
    """Jacobian of a batched map at ``x``; output has shape ``(d, *out_shape)``.

    ``fun`` maps ``(m, d)`` inputs to ``(m, *out_shape)`` outputs. With
    ``with_value`` the unshifted value is evaluated in the same batch and
    returned first.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d = x.shape[0]
    h, div = _steps(shiftable, eps)
    disp = np.diag(h)
    points = np.concatenate([x + disp, x - disp] + ([x[None, :]] if with_value else []))
    vals = np.asarray(fun(points))
    div = div.reshape((d,) + (1,) * (vals.ndim - 1))
    jac = (vals[:d] - vals[d : 2 * d]) / div
    if with_value:
        return vals[2 * d], jac
    return jac


def shift_second(fun: BatchFn, x, rows, cols, shiftable, eps: float = FD_EPS2) -> np.ndarray:
    """Second derivatives ``d2 f / dx_i dx_j`` for ``i in rows``, ``j in cols`` by iterated
    two-point rules (four evaluations per entry). Returns ``(len(rows), len(cols), *out_shape)``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    h, div = _steps(shiftable, eps)
    R, C = len(rows), len(cols)
    if R == 0 or C == 0:
        out = np.asarray(fun(x[None, :]))
        return np.zeros((R, C) + out.shape[1:])
    d = x.shape[0]
    signs = np.array([(1, 1), (1, -1), (-1, 1), (-1, -1)], dtype=float)
    points = np.broadcast_to(x, (R, C, 4, d)).copy()
    ri = np.broadcast_to(rows[:, None, None], (R, C, 4))
    cj = np.broadcast_to(cols[None, :, None], (R, C, 4))
    si = np.broadcast_to(signs[None, None, :, 0], (R, C, 4))
    sj = np.broadcast_to(signs[None, None, :, 1], (R, C, 4))
    flat = points.reshape(-1, d)
    k = np.arange(R * C * 4)
    # np.add.at so that i == j accumulates both displacements
    np.add.at(flat, (k, ri.reshape(-1)), (si * h[ri]).reshape(-1))
    np.add.at(flat, (k, cj.reshape(-1)), (sj * h[cj]).reshape(-1))
    vals = np.asarray(fun(flat))
    vals = vals.reshape((R, C, 4) + vals.shape[1:])
    combo = vals[:, :, 0] - vals[:, :, 1] - vals[:, :, 2] + vals[:, :, 3]
    scale = np.outer(div[rows], div[cols]).reshape((R, C) + (1,) * (combo.ndim - 2))
    return combo / scale


def shift_hessian(fun: BatchFn, x, shiftable, eps: float = FD_EPS2, symmetrize: bool = True) -> np.ndarray:
    idx = np.arange(np.asarray(x).reshape(-1).shape[0])
    hess = shift_second(fun, x, idx, idx, shiftable, eps)
    if symmetrize:
        hess = 0.5 * (hess + np.swapaxes(hess, 0, 1))
    return hess


def vjp(fun: BatchFn, x, v, shiftable, eps: float = FD_EPS) -> np.ndarray:
    """``v^T J`` for a batched vector-valued map, with ``J`` from :func:`shift_jacobian`."""
    jac = shift_jacobian(fun, x, shiftable, eps)
    v = np.asarray(v, dtype=float)
    return np.tensordot(jac.reshape(jac.shape[0], -1), v.reshape(-1), axes=(1, 0))


# --- scalar-field derivatives ----------------------------------------------------


def _fd_slots(mask) -> list[int]:
    return np.flatnonzero(~np.asarray(mask, dtype=bool)).tolist()


def grad_z(field: ScalarField, z, a=(), *, eps: float = FD_EPS, full_output: bool = False):
    """Gradient in ``z``: ``[E(z + pi/2 e_i) - E(z - pi/2 e_i)] / 2`` per shiftable slot."""
    z, a = field._args(z, a)
    g = shift_jacobian(field.along_z(a), z, field.shift_z, eps)
    if full_output:
        return g, {"fd_slots": _fd_slots(field.shift_z)}
    return g


def value_and_grad_z(field: ScalarField, z, a=(), *, eps: float = FD_EPS) -> tuple[float, np.ndarray]:
    """``(E(z, a), grad_z E)`` from one batch."""
    z, a = field._args(z, a)
    value, g = shift_jacobian(field.along_z(a), z, field.shift_z, eps, with_value=True)
    return float(value), g


def hessian_zz(
    field: ScalarField, z, a=(), *, eps: float = FD_EPS2, symmetrize: bool = True, full_output: bool = False
):
    """Hessian in ``z`` by iterating the shift rule, symmetrized as ``(H + H^T) / 2``."""
    z, a = field._args(z, a)
    hess = shift_hessian(field.along_z(a), z, field.shift_z, eps, symmetrize)
    if full_output:
        return hess, {"fd_slots": _fd_slots(field.shift_z)}
    return hess


def mixed_jacobian_za(field: ScalarField, z, a, *, eps: float = FD_EPS2, full_output: bool = False):
    """``B[k, i] = d2 E / da_k dz_i`` with shape ``(dim_a, dim_z)``.

    Affine-in-``a`` fields use the shift-rule gradient of ``dE/da_k``. Otherwise
    the mixed derivative is taken jointly in ``(z, a)``, with finite
    differences on any a-slot that is not shiftable.
    """
    z, a = field._args(z, a)
    if field.a_terms is not None:
        jac = shift_jacobian(field.a_terms, z, field.shift_z, FD_EPS)
        out = np.asarray(jac).reshape(field.dim_z, field.dim_a).T
        fd_a = []
    else:
        fun, mask = field.joint()
        rows = field.dim_z + np.arange(field.dim_a)
        out = shift_second(fun, np.concatenate([z, a]), rows, np.arange(field.dim_z), mask, eps)
        fd_a = _fd_slots(mask[field.dim_z :])
    if full_output:
        return out, {"fd_slots": _fd_slots(field.shift_z), "fd_a_slots": fd_a}
    return out


def fd_grad(fun: Callable[[np.ndarray], float], x, eps: float = FD_EPS) -> np.ndarray:
    """Central-difference gradient of a plain scalar function."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = eps
        g[i] = (fun(x + e) - fun(x - e)) / (2 * eps)
    return g


def fd_hessian(fun: Callable[[np.ndarray], float], x, eps: float = FD_EPS2) -> np.ndarray:
    """Central-difference Hessian of a plain scalar function."""
    x = np.asarray(x, dtype=float).reshape(-1)
    d = x.shape[0]
    hess = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = eps
            ej[j] = eps
            val = (fun(x + ei + ej) - fun(x + ei - ej) - fun(x - ei + ej) + fun(x - ei - ej)) / (4 * eps * eps)
            hess[i, j] = hess[j, i] = val
    return hess


# --- fields built from circuits ---------------------------------------------------


def energy(circuit: ParamCircuit, H: ParameterizedHamiltonian) -> ScalarField:
    """``E(z, a) = <psi_z| H(a) |psi_z>`` for ``H(a) = H_0 + sum_k a_k H_k``."""
    if circuit.n_qubits != H.n_qubits:
        raise ValueError(f"circuit has {circuit.n_qubits} qubits, Hamiltonian {H.n_qubits}")
    if circuit.n_data:
        raise ValueError("energy fields need a circuit without data slots")
    base = compile_pauli_sum(H.base)
    parts = [compile_pauli_sum(Hk) for Hk in H.couplings]

    def a_terms_from_states(psi):
        if not parts:
            return np.zeros((psi.shape[0], 0))
        return np.stack([expectation_batch(psi, Hk, c) for Hk, c in zip(H.couplings, parts)], axis=1)

    def batch(Z, A):
        psi = evaluate_batch(circuit, Z)
        e = expectation_batch(psi, H.base, base)
        return e + np.sum(A * a_terms_from_states(psi), axis=1)

    def a_terms(Z):
        return a_terms_from_states(evaluate_batch(circuit, Z))

    return ScalarField(batch, circuit.n_trainable, H.n_params, circuit.shiftable_mask(), None, a_terms)


def expectation(circuit: ParamCircuit, obs: PauliSum) -> ScalarField:
    """``<psi_z| obs |psi_z>`` as a field with no ``a`` dependence."""
    if circuit.n_qubits != obs.n_qubits:
        raise ValueError(f"circuit has {circuit.n_qubits} qubits, observable {obs.n_qubits}")
    compiled = compile_pauli_sum(obs)

    def batch(Z, A):
        return expectation_batch(evaluate_batch(circuit, Z), obs, compiled)

    return ScalarField(batch, circuit.n_trainable, 0, circuit.shiftable_mask())
