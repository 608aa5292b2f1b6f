"""Brute-force reference values that share no code path with the variational pipeline.

Dense Kronecker matrices and a dense eigensolver give exact ground states;
susceptibilities are central differences on those states; geometric
entanglement is a multi-start search over product states written directly in
Bloch-sphere angles.
"""

from __future__ import annotations

import warnings
from functools import reduce

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .observables import ParameterizedHamiltonian, PauliSum, evaluate
from .statevec import StateVector

MAX_DENSE_QUBITS = 12
MAX_BRUTE_QUBITS = 4
GAP_WARN = 1e-8

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense_matrix(obs: PauliSum, n: int | None = None) -> np.ndarray:
    """Assemble ``sum_k c_k P_k`` as a dense ``2**n x 2**n`` matrix (qubit 0 most significant)."""
    n = obs.n_qubits if n is None else n
    if n != obs.n_qubits:
        raise ValueError(f"observable acts on {obs.n_qubits} qubits, asked for {n}")
    if n > MAX_DENSE_QUBITS:
        raise ValueError(f"dense matrices are limited to {MAX_DENSE_QUBITS} qubits, got {n}")
    out = np.zeros((2**n, 2**n), dtype=complex)
    for term in obs.terms:
        out += term.coefficient * reduce(np.kron, (_PAULI[p] for p in term.letters))
    return out


def _ground(H: ParameterizedHamiltonian, a) -> tuple[np.ndarray, np.ndarray]:
    if H.n_qubits > MAX_DENSE_QUBITS:
        raise ValueError(f"dense matrices are limited to {MAX_DENSE_QUBITS} qubits, got {H.n_qubits}")
    return np.linalg.eigh(dense_matrix(evaluate(H, a)))


def ground_state_exact(H: ParameterizedHamiltonian, a, *, full_output: bool = False):
    """Lowest eigenpair of ``H(a)``.

    Returns:
        ``(energy, state)``; with ``full_output`` also the gap to the first
        excited level.
    """
    w, v = _ground(H, a)
    state = StateVector.from_amplitudes(v[:, 0], normalize=True)
    if full_output:
        gap = float(w[1] - w[0]) if w.shape[0] > 1 else np.inf
        return float(w[0]), state, gap
    return float(w[0]), state


def spectral_gap(H: ParameterizedHamiltonian, a) -> float:
    w, _ = _ground(H, a)
    return float(w[1] - w[0]) if w.shape[0] > 1 else np.inf


def exact_expectation(H: ParameterizedHamiltonian, A_obs: PauliSum, a) -> tuple[float, float]:
    """``(<A>, gap)`` on the exact ground state of ``H(a)``."""
    w, v = _ground(H, a)
    g = v[:, 0]
    value = float(np.real(np.vdot(g, dense_matrix(A_obs) @ g)))
    gap = float(w[1] - w[0]) if w.shape[0] > 1 else np.inf
    return value, gap


def susceptibility_exact_fd(
    H: ParameterizedHamiltonian, A_obs: PauliSum, a, k: int = 0, eps: float = 1e-4
) -> float:
    """``d<A>/da_k`` on the exact ground state by central differences.

    Warns when either displaced point has a gap below ``1e-8``, where the
    ground state (and hence the derivative) is not well defined.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    a = np.asarray(a, dtype=float).reshape(-1)
    if not 0 <= k < a.shape[0]:
        raise ValueError(f"k={k} out of range for {a.shape[0]} parameters")
    e = np.zeros_like(a)
    e[k] = eps
    plus, gap_p = exact_expectation(H, A_obs, a + e)
    minus, gap_m = exact_expectation(H, A_obs, a - e)
    if min(gap_p, gap_m) < GAP_WARN:
        warnings.warn(
            f"near-degenerate ground state (gap {min(gap_p, gap_m):.2e}) at a={a.tolist()}; "
            "susceptibility is ill-defined",
            RuntimeWarning,
            stacklevel=2,
        )
    return (plus - minus) / (2 * eps)


# --- geometric entanglement ------------------------------------------------------


def product_state(angles: np.ndarray) -> np.ndarray:
    """``kron_q (cos(t_q/2), e^{i p_q} sin(t_q/2))`` from ``angles = [t_0, p_0, t_1, p_1, ...]``."""
    angles = np.asarray(angles, dtype=float).reshape(-1, 2)
    factors = [np.array([np.cos(t / 2), np.exp(1j * p) * np.sin(t / 2)]) for t, p in angles]
    return reduce(np.kron, factors)


def _neg_overlap(angles, psi):
    return -abs(np.vdot(product_state(angles), psi)) ** 2


def entanglement_brute(state: StateVector, restarts: int = 64, seed: int = 0, *, full_output: bool = False):
    """Geometric entanglement ``1 - max_prod |<prod|psi>|^2`` by exhaustive-ish search.

    A coarse grid over Bloch angles seeds the search, followed by ``restarts``
    random L-BFGS starts. The result is the best value found; ``full_output``
    adds the spread of the per-restart values.
    """
    n = state.n_qubits
    if n > MAX_BRUTE_QUBITS:
        raise ValueError(f"brute-force entanglement is limited to {MAX_BRUTE_QUBITS} qubits, got {n}")
    if restarts < 1:
        raise ValueError("restarts must be positive")
    psi = np.asarray(state.amplitudes)
    rng = np.random.default_rng(seed)

    # grid pass: 4 polar x 4 azimuthal values per qubit; the best few seed L-BFGS
    ts = np.linspace(0, np.pi, 4)
    ps = np.linspace(0, 2 * np.pi, 4, endpoint=False)
    single_angles = np.array([(t, p) for t in ts for p in ps])
    single = np.array([product_state(x) for x in single_angles])
    grid_states = single
    for _ in range(n - 1):
        grid_states = np.einsum("ai,bj->abij", grid_states, single).reshape(-1, grid_states.shape[1] * 2)
    grid_vals = np.abs(grid_states.conj() @ psi) ** 2
    n_seed = min(4, grid_vals.shape[0])
    starts = []
    for idx in np.argsort(-grid_vals, kind="stable")[:n_seed]:
        digits = np.unravel_index(idx, (len(single_angles),) * n)
        starts.append(np.concatenate([single_angles[d] for d in digits]))
    starts += [rng.uniform(0, 2 * np.pi, 2 * n) for _ in range(restarts)]

    values = []
    for x0 in starts:
        res = scipy_minimize(_neg_overlap, x0, args=(psi,), method="L-BFGS-B", options={"gtol": 1e-12, "ftol": 1e-15})
        values.append(-res.fun)
    values = np.clip(np.array(values), 0.0, 1.0)
    best = float(values.max())
    measure = max(0.0, 1.0 - best)
    if full_output:
        random_vals = 1.0 - values[n_seed:]
        return measure, {"restart_std": float(random_vals.std()), "restart_max": float(random_vals.max()),
                         "grid_best": float(1.0 - grid_vals.max())}
    return measure
