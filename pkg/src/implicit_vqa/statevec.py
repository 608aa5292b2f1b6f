"""Dense statevector simulation.

Qubit 0 is the most significant bit of the amplitude index, so for two
qubits the basis order is ``|00>, |01>, |10>, |11>``.

Everything here is pure: gates return new states. Internally the work is done
by batched kernels operating on arrays of shape ``(m, 2**n)`` so that many
circuits (e.g. all parameter-shifted copies) can be simulated in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .observables import PauliSum

MAX_QUBITS = 14

# kind -> (number of target qubits, number of angles)
GATE_SPECS = {
    "RX": (1, 1),
    "RY": (1, 1),
    "RZ": (1, 1),
    "Rot": (1, 3),
    "H": (1, 0),
    "CZ": (2, 0),
    "CNOT": (2, 0),
    "SWAP": (2, 0),
    "CSWAP": (3, 0),
}

_SQRT1_2 = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class StateVector:
    """Normalized amplitudes over ``n_qubits`` qubits."""

    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if self.n_qubits < 1 or self.n_qubits > MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")
        if amps.shape[0] != 2**self.n_qubits:
            raise ValueError(
                f"expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, got {amps.shape[0]}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-8:
            raise ValueError(f"state is not normalized (norm {norm})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize: bool = False) -> StateVector:
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = int(round(np.log2(amps.shape[0])))
        if 2**n != amps.shape[0]:
            raise ValueError(f"amplitude count {amps.shape[0]} is not a power of two")
        if normalize:
            amps = amps / np.linalg.norm(amps)
        return cls(n, amps)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class Gate:
    """A concrete gate: kind, target qubits and bound angles (radians).

    For controlled kinds the first target is the control (for CSWAP the
    control is followed by the two swapped qubits).
    """

    kind: str
    targets: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in GATE_SPECS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        n_targets, n_params = GATE_SPECS[self.kind]
        targets = tuple(int(t) for t in self.targets)
        params = tuple(float(p) for p in self.params)
        if len(targets) != n_targets:
            raise ValueError(f"{self.kind} acts on {n_targets} qubit(s), got targets {targets}")
        if len(set(targets)) != len(targets):
            raise ValueError(f"{self.kind} targets must be distinct, got {targets}")
        if any(t < 0 for t in targets):
            raise ValueError(f"negative target in {targets}")
        if len(params) != n_params:
            raise ValueError(f"{self.kind} takes {n_params} angle(s), got {len(params)}")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "params", params)

    def inverse(self) -> Gate:
        if self.kind in ("RX", "RY", "RZ"):
            return Gate(self.kind, self.targets, (-self.params[0],))
        if self.kind == "Rot":
            phi, theta, omega = self.params
            return Gate("Rot", self.targets, (-omega, -theta, -phi))
        return self


def init_basis_state(n_qubits: int, index: int = 0) -> StateVector:
    """Computational basis state ``|index>``."""
    if not 0 <= index < 2**n_qubits:
        raise ValueError(f"basis index {index} out of range for {n_qubits} qubits")
    amps = np.zeros(2**n_qubits, dtype=complex)
    amps[index] = 1.0
    return StateVector(n_qubits, amps)


# --- single-qubit matrices, batched over angles --------------------------------


def rotation_matrices(kind: str, angles: Sequence[np.ndarray]) -> np.ndarray:
    """Batched 2x2 matrices for a parameterized single-qubit kind.

    ``angles`` holds one array of shape ``(m,)`` per angle slot. Returns an
    array of shape ``(m, 2, 2)``; real-valued for RY, complex otherwise.
    """
    if kind == "Rot":
        phi, theta, omega = (np.asarray(x, dtype=float) for x in angles)
        c = np.cos(theta / 2)
        s = np.sin(theta / 2)
        plus = np.exp(-0.5j * (phi + omega))
        minus = np.exp(0.5j * (phi - omega))
        m = np.empty(c.shape + (2, 2), dtype=complex)
        m[..., 0, 0] = plus * c
        m[..., 0, 1] = -minus * s
        m[..., 1, 0] = np.conj(minus) * s
        m[..., 1, 1] = np.conj(plus) * c
        return m
    (theta,) = (np.asarray(x, dtype=float) for x in angles)
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    if kind == "RY":
        m = np.empty(theta.shape + (2, 2))
        m[..., 0, 0] = c
        m[..., 1, 1] = c
        m[..., 0, 1] = -s
        m[..., 1, 0] = s
        return m
    m = np.zeros(theta.shape + (2, 2), dtype=complex)
    if kind == "RX":
        m[..., 0, 0] = c
        m[..., 1, 1] = c
        m[..., 0, 1] = -1j * s
        m[..., 1, 0] = -1j * s
    elif kind == "RZ":
        m[..., 0, 0] = np.exp(-0.5j * theta)
        m[..., 1, 1] = np.exp(0.5j * theta)
    else:
        raise ValueError(f"{kind} is not a parameterized single-qubit gate")
    return m


_FIXED_1Q = {
    "H": np.array([[_SQRT1_2, _SQRT1_2], [_SQRT1_2, -_SQRT1_2]]),
}


def apply_1q(psi: np.ndarray, mats: np.ndarray, target: int, n_qubits: int) -> np.ndarray:
    """Apply ``(2, 2)`` or ``(m, 2, 2)`` matrices to qubit ``target`` of a batch ``(m, 2**n)``.

    The result stays real when both the batch and the matrices are real.
    """
    m = psi.shape[0]
    view = psi.reshape(m, 2**target, 2, 2 ** (n_qubits - target - 1))
    if mats.ndim == 2:
        u = mats[None, :, :, None, None]
    else:
        u = mats[:, :, :, None, None]
    v0 = view[:, :, 0, :]
    v1 = view[:, :, 1, :]
    out = np.empty(view.shape, dtype=np.result_type(psi, mats))
    out[:, :, 0, :] = u[:, 0, 0] * v0 + u[:, 0, 1] * v1
    out[:, :, 1, :] = u[:, 1, 0] * v0 + u[:, 1, 1] * v1
    return out.reshape(m, -1)


@lru_cache(maxsize=None)
def _permutation(kind: str, targets: tuple[int, ...], n_qubits: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Index map ``src`` and optional sign so that ``out[:, i] = sign[i] * psi[:, src[i]]``."""
    idx = np.arange(2**n_qubits)

    def bit(q):
        return (idx >> (n_qubits - 1 - q)) & 1

    def mask(q):
        return 1 << (n_qubits - 1 - q)

    sign = None
    if kind == "CZ":
        sign = np.where(bit(targets[0]) & bit(targets[1]), -1.0, 1.0)
        src = idx
    elif kind == "CNOT":
        c, t = targets
        src = np.where(bit(c) == 1, idx ^ mask(t), idx)
    elif kind == "SWAP":
        q1, q2 = targets
        differ = bit(q1) != bit(q2)
        src = np.where(differ, idx ^ mask(q1) ^ mask(q2), idx)
    elif kind == "CSWAP":
        c, q1, q2 = targets
        differ = (bit(c) == 1) & (bit(q1) != bit(q2))
        src = np.where(differ, idx ^ mask(q1) ^ mask(q2), idx)
    else:
        raise ValueError(f"{kind} is not a permutation gate")
    src.setflags(write=False)
    return src, sign


def apply_kind_batch(
    psi: np.ndarray, kind: str, targets: tuple[int, ...], angles: Sequence[np.ndarray], n_qubits: int
) -> np.ndarray:
    """Apply one gate kind to a batch of states, with per-row angles."""
    if kind in _FIXED_1Q:
        return apply_1q(psi, _FIXED_1Q[kind], targets[0], n_qubits)
    if GATE_SPECS[kind][1]:
        return apply_1q(psi, rotation_matrices(kind, angles), targets[0], n_qubits)
    src, sign = _permutation(kind, targets, n_qubits)
    out = psi[:, src]
    if sign is not None:
        out = out * sign
    return out


def _check_gate(n_qubits: int, gate: Gate):
    if max(gate.targets) >= n_qubits:
        raise ValueError(f"gate {gate.kind} targets {gate.targets} invalid for {n_qubits} qubits")


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Return ``U @ state`` for a single gate."""
    _check_gate(state.n_qubits, gate)
    psi = state.amplitudes[None, :]
    angles = [np.array([p]) for p in gate.params]
    out = apply_kind_batch(psi, gate.kind, gate.targets, angles, state.n_qubits)
    return StateVector(state.n_qubits, out[0])


def apply_gates(state: StateVector, gates: Sequence[Gate]) -> StateVector:
    for g in gates:
        state = apply_gate(state, g)
    return state


# --- expectation values -----------------------------------------------------


@lru_cache(maxsize=None)
def _pauli_action(letters: str) -> tuple[int, np.ndarray]:
    """Flip mask and phases so that ``P|j> = phase[j] |j ^ flip>``."""
    n = len(letters)
    idx = np.arange(2**n)
    flip = 0
    phase = np.ones(2**n, dtype=complex)
    for q, letter in enumerate(letters):
        b = (idx >> (n - 1 - q)) & 1
        if letter in "XY":
            flip |= 1 << (n - 1 - q)
        if letter == "Y":
            phase = phase * np.where(b, -1j, 1j)
        elif letter == "Z":
            phase = phase * np.where(b, -1.0, 1.0)
        elif letter not in "IX":
            raise ValueError(f"bad Pauli letter {letter!r}")
    phase.setflags(write=False)
    return flip, phase


def compile_pauli_sum(obs: PauliSum) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Group terms by flip mask: returns ``(src, weights)`` pairs with
    ``<psi|obs|psi> = sum_j conj(psi[src[j]]) * weights[j] * psi[j]`` summed over groups."""
    groups: dict[int, np.ndarray] = {}
    for term in obs.terms:
        flip, phase = _pauli_action(term.letters)
        groups[flip] = groups.get(flip, 0) + term.coefficient * phase
    idx = np.arange(2**obs.n_qubits)
    # real weights keep real-amplitude batches in real arithmetic
    return tuple((idx ^ flip, w.real if not np.any(w.imag) else w) for flip, w in sorted(groups.items()))


def expectation_batch(psi: np.ndarray, obs: PauliSum, compiled=None) -> np.ndarray:
    """``<psi_r|obs|psi_r>`` for every row of a ``(m, 2**n)`` batch."""
    if psi.shape[-1] != 2**obs.n_qubits:
        raise ValueError(f"observable acts on {obs.n_qubits} qubits but state has dim {psi.shape[-1]}")
    if compiled is None:
        compiled = compile_pauli_sum(obs)
    total = sum(np.einsum("aj,aj->a", np.conj(psi[:, src]), w * psi) for src, w in compiled)
    total = np.asarray(total) * np.ones(psi.shape[0])
    if np.iscomplexobj(total) and np.max(np.abs(total.imag), initial=0.0) > 1e-10 * max(
        1.0, sum(abs(t.coefficient) for t in obs.terms)
    ):
        raise ValueError("non-Hermitian observable: expectation has an imaginary part")
    return total.real


def expectation_pauli_sum(state: StateVector, obs: PauliSum) -> float:
    """``<psi|obs|psi>``; raises ``ValueError`` on a qubit-count mismatch."""
    if obs.n_qubits != state.n_qubits:
        raise ValueError(f"observable on {obs.n_qubits} qubits, state on {state.n_qubits}")
    return float(expectation_batch(state.amplitudes[None, :], obs)[0])


# --- overlaps -----------------------------------------------------------------


def _check_pair(s1: StateVector, s2: StateVector):
    if s1.n_qubits != s2.n_qubits:
        raise ValueError(f"qubit-count mismatch: {s1.n_qubits} vs {s2.n_qubits}")


def overlap_sq_batch(psi1: np.ndarray, psi2: np.ndarray) -> np.ndarray:
    """Row-wise ``|<psi1|psi2>|**2``; either argument may be a single row broadcast."""
    inner = np.einsum("aj,aj->a", np.conj(np.atleast_2d(psi1)), np.atleast_2d(psi2))
    return np.clip(np.abs(inner) ** 2, 0.0, 1.0)


def overlap_sq(s1: StateVector, s2: StateVector) -> float:
    """``|<s1|s2>|**2``."""
    _check_pair(s1, s2)
    return float(overlap_sq_batch(s1.amplitudes, s2.amplitudes)[0])


def swap_test_probability(s1: StateVector, s2: StateVector) -> float:
    """Probability of reading the ancilla as 0 in a simulated SWAP test.

    Builds ``|0>_anc |s1> |s2>``, applies H on the ancilla, controlled-SWAP of
    the two registers qubit by qubit, and H again. The result equals
    ``(1 + |<s1|s2>|**2) / 2``.
    """
    _check_pair(s1, s2)
    n = s1.n_qubits
    total = 2 * n + 1
    if total > MAX_QUBITS:
        raise ValueError(f"SWAP test on {n}-qubit states needs {total} qubits (max {MAX_QUBITS})")
    joint = np.kron(np.array([1.0, 0.0]), np.kron(s1.amplitudes, s2.amplitudes))[None, :]
    joint = apply_kind_batch(joint, "H", (0,), (), total)
    for q in range(n):
        joint = apply_kind_batch(joint, "CSWAP", (0, 1 + q, 1 + n + q), (), total)
    joint = apply_kind_batch(joint, "H", (0,), (), total)
    half = 2 ** (total - 1)
    return float(np.sum(np.abs(joint[0, :half]) ** 2))
