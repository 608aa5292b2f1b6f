"""Parameterized circuits and the ansatz constructors.

A :class:`ParamCircuit` is a list of gate templates whose angle slots point at
a trainable parameter, a data feature, or a literal constant. Circuits always
start from ``|0...0>``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .statevec import GATE_SPECS, StateVector, apply_kind_batch

# Kinds whose angles enter through exp(-i theta P / 2) with P a Pauli operator.
_PAULI_ROTATIONS = frozenset({"RX", "RY", "RZ", "Rot"})


@dataclass(frozen=True)
class Slot:
    """Where an angle comes from: ``source`` is ``"z"`` (trainable), ``"x"`` (data) or ``"c"`` (constant)."""

    source: str
    value: float

    def __post_init__(self):
        if self.source not in ("z", "x", "c"):
            raise ValueError(f"unknown slot source {self.source!r}")
        if self.source != "c":
            object.__setattr__(self, "value", int(self.value))


def trainable(i: int) -> Slot:
    return Slot("z", i)


def data(i: int) -> Slot:
    return Slot("x", i)


def const(v: float) -> Slot:
    return Slot("c", float(v))


@dataclass(frozen=True)
class GateTemplate:
    kind: str
    targets: tuple[int, ...]
    slots: tuple[Slot, ...] = ()

    def __post_init__(self):
        if self.kind not in GATE_SPECS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        n_targets, n_params = GATE_SPECS[self.kind]
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        object.__setattr__(self, "slots", tuple(self.slots))
        if len(self.targets) != n_targets or len(set(self.targets)) != n_targets:
            raise ValueError(f"{self.kind} needs {n_targets} distinct target(s), got {self.targets}")
        if len(self.slots) != n_params:
            raise ValueError(f"{self.kind} takes {n_params} angle slot(s), got {len(self.slots)}")


@dataclass(frozen=True)
class ParamCircuit:
    """Ordered gate templates plus parameter bookkeeping.

    ``groups`` partitions the trainable indices into named blocks (one per
    layer for the classifier) so that per-group penalties need no
    ansatz-specific code. It defaults to a single group holding everything.
    """

    n_qubits: int
    gates: tuple[GateTemplate, ...]
    n_trainable: int
    n_data: int = 0
    groups: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_qubits < 1:
            raise ValueError("circuit needs at least one qubit")
        used = np.zeros(self.n_trainable, dtype=int)
        for g in self.gates:
            if max(g.targets) >= self.n_qubits:
                raise ValueError(f"gate {g.kind} on {g.targets} exceeds {self.n_qubits} qubits")
            for s in g.slots:
                if s.source == "z":
                    if not 0 <= s.value < self.n_trainable:
                        raise ValueError(f"trainable slot {s.value} out of range")
                    used[s.value] += 1
                elif s.source == "x" and not 0 <= s.value < self.n_data:
                    raise ValueError(f"data slot {s.value} out of range")
        if np.any(used == 0):
            raise ValueError(f"trainable slots never referenced: {np.flatnonzero(used == 0).tolist()}")
        groups = self.groups
        if groups is None:
            groups = (tuple(range(self.n_trainable)),)
        groups = tuple(tuple(int(i) for i in g) for g in groups)
        if sorted(i for g in groups for i in g) != list(range(self.n_trainable)):
            raise ValueError("groups must partition the trainable indices")
        object.__setattr__(self, "groups", groups)

    def shiftable_mask(self) -> np.ndarray:
        """True for trainable slots that feed exactly one Pauli-rotation angle,
        i.e. where the two-term shift rule is exact."""
        count = np.zeros(self.n_trainable, dtype=int)
        ok = np.ones(self.n_trainable, dtype=bool)
        for g in self.gates:
            for s in g.slots:
                if s.source == "z":
                    count[s.value] += 1
                    ok[s.value] &= g.kind in _PAULI_ROTATIONS
        return ok & (count == 1)

    def kinds(self) -> list[str]:
        return [g.kind for g in self.gates]

    @cached_property
    def _tables(self):
        tables = _kernels.compile_tables(self.gates)
        return tables, _kernels.is_real(tables[0])


def _bind(slot: Slot, Z: np.ndarray, X: np.ndarray | None, m: int) -> np.ndarray:
    if slot.source == "z":
        return Z[:, slot.value]
    if slot.source == "x":
        return X[:, slot.value]
    return np.full(m, slot.value)


def evaluate_batch(
    circuit: ParamCircuit, Z: np.ndarray, X: np.ndarray | None = None, *, backend: str = "auto"
) -> np.ndarray:
    """Simulate the circuit for each row of ``Z`` (and ``X``); returns ``(m, 2**n)`` amplitudes.

    Either array may have a single row, which is broadcast against the other.
    ``backend`` selects the compiled kernel (``"numba"``), the pure numpy gate
    loop (``"numpy"``), or the compiled one when available (``"auto"``).
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != circuit.n_trainable:
        raise ValueError(f"expected {circuit.n_trainable} trainable values, got {Z.shape[1]}")
    if circuit.n_data:
        if X is None:
            raise ValueError(f"circuit needs {circuit.n_data} data values")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != circuit.n_data:
            raise ValueError(f"expected {circuit.n_data} data values, got {X.shape[1]}")
        m = max(Z.shape[0], X.shape[0])
        if Z.shape[0] not in (1, m) or X.shape[0] not in (1, m):
            raise ValueError(f"cannot broadcast {Z.shape[0]} parameter rows against {X.shape[0]} data rows")
    else:
        if X is not None and np.size(X):
            raise ValueError("circuit takes no data values")
        X = np.zeros((1, 0))
        m = Z.shape[0]
    if backend == "auto":
        backend = "numba" if _kernels.AVAILABLE else "numpy"
    if backend == "numba":
        tables, real = circuit._tables
        kernel = _kernels.simulate_real if real else _kernels.simulate
        return kernel(*tables, np.ascontiguousarray(Z), np.ascontiguousarray(X), circuit.n_qubits)
    if backend != "numpy":
        raise ValueError(f"unknown backend {backend!r}")
    Z = np.broadcast_to(Z, (m, Z.shape[1]))
    X = np.broadcast_to(X, (m, X.shape[1]))
    n = circuit.n_qubits
    # starts real; promoted to complex by the first complex-valued gate
    psi = np.zeros((m, 2**n))
    psi[:, 0] = 1.0
    for g in circuit.gates:
        angles = [_bind(s, Z, X, m) for s in g.slots]
        psi = apply_kind_batch(psi, g.kind, g.targets, angles, n)
    return psi


def evaluate_state(circuit: ParamCircuit, trainable_values, data_values=()) -> StateVector:
    """``U(z, x)|0...0>`` as a :class:`StateVector`."""
    z = np.asarray(trainable_values, dtype=float).reshape(-1)
    x = np.asarray(data_values, dtype=float).reshape(-1)
    if z.shape[0] != circuit.n_trainable:
        raise ValueError(f"expected {circuit.n_trainable} trainable values, got {z.shape[0]}")
    if x.shape[0] != circuit.n_data:
        raise ValueError(f"expected {circuit.n_data} data values, got {x.shape[0]}")
    psi = evaluate_batch(circuit, z[None, :], x[None, :] if circuit.n_data else None)
    return StateVector(circuit.n_qubits, psi[0])


# --- ansatz constructors --------------------------------------------------------


def two_design_ansatz(n: int, layers: int) -> ParamCircuit:
    """Simplified two-design: an RY layer, then per layer CZ on even pairs
    followed by RY on those qubits, then CZ on odd pairs followed by RY.

    Trainable count is ``n + layers * 2 * (n - 1)``.
    """
    if n < 2 or layers < 1:
        raise ValueError(f"two-design needs n >= 2 and layers >= 1, got n={n}, layers={layers}")
    gates = []
    k = 0
    for q in range(n):
        gates.append(GateTemplate("RY", (q,), (trainable(k),)))
        k += 1
    for _ in range(layers):
        for start in (0, 1):
            pairs = [(q, q + 1) for q in range(start, n - 1, 2)]
            for pair in pairs:
                gates.append(GateTemplate("CZ", pair))
            for pair in pairs:
                for q in pair:
                    gates.append(GateTemplate("RY", (q,), (trainable(k),)))
                    k += 1
    return ParamCircuit(n, tuple(gates), k)


def reuploading_circuit(layers: int) -> ParamCircuit:
    """Single-qubit data re-uploading classifier.

    Applies ``Rot(alpha, beta, 0)`` then ``Rot(z_l)`` for ``l = 0..layers``, so
    there are ``layers + 1`` weight blocks of three angles, grouped per block.
    """
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    gates = []
    groups = []
    for l in range(layers + 1):
        gates.append(GateTemplate("Rot", (0,), (data(0), data(1), const(0.0))))
        idx = (3 * l, 3 * l + 1, 3 * l + 2)
        gates.append(GateTemplate("Rot", (0,), tuple(trainable(i) for i in idx)))
        groups.append(idx)
    return ParamCircuit(1, tuple(gates), 3 * (layers + 1), n_data=2, groups=tuple(groups))


def product_ansatz(n: int) -> ParamCircuit:
    """One three-angle rotation per qubit and nothing else: separable states only."""
    if n < 1:
        raise ValueError(f"need at least one qubit, got {n}")
    gates = tuple(
        GateTemplate("Rot", (q,), tuple(trainable(3 * q + j) for j in range(3))) for q in range(n)
    )
    return ParamCircuit(n, gates, 3 * n, groups=tuple((3 * q, 3 * q + 1, 3 * q + 2) for q in range(n)))


def entangler_ansatz(n: int, layers: int = 1) -> ParamCircuit:
    """Per layer: ``Rot`` on every qubit, then a CNOT ring ``i -> i+1 mod n``.

    For two qubits the ring has a single CNOT ``0 -> 1``.
    """
    if n < 2 or layers < 1:
        raise ValueError(f"entangler needs n >= 2 and layers >= 1, got n={n}, layers={layers}")
    gates = []
    k = 0
    ring = [(0, 1)] if n == 2 else [(i, (i + 1) % n) for i in range(n)]
    for _ in range(layers):
        for q in range(n):
            gates.append(GateTemplate("Rot", (q,), tuple(trainable(k + j) for j in range(3))))
            k += 3
        for c, t in ring:
            gates.append(GateTemplate("CNOT", (c, t)))
    return ParamCircuit(n, tuple(gates), k)


def normalize_features(x: np.ndarray, low: float = -1.0, high: float = 1.0) -> np.ndarray:
    """Affinely map features from ``[low, high]`` onto ``[-pi, pi]``."""
    x = np.asarray(x, dtype=float)
    return (x - low) / (high - low) * 2 * np.pi - np.pi


def classifier_probability(circuit: ParamCircuit, Z: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``p = (1 + <Z>) / 2`` of the single-qubit output for each (parameter, data) row pair."""
    psi = evaluate_batch(circuit, Z, X)
    return np.abs(psi[:, 0]) ** 2
