"""Pauli strings, Pauli sums and Hamiltonians that depend linearly on parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

PAULI_LETTERS = frozenset("IXYZ")


@dataclass(frozen=True)
class PauliString:
    """``coefficient * letters[0] (x) letters[1] (x) ...`` with one letter per qubit."""

    coefficient: float
    letters: str

    def __post_init__(self):
        coefficient = float(self.coefficient)
        if not math.isfinite(coefficient):
            raise ValueError(f"non-finite coefficient {coefficient}")
        if not self.letters or not set(self.letters) <= PAULI_LETTERS:
            raise ValueError(f"letters must be a non-empty string over IXYZ, got {self.letters!r}")
        object.__setattr__(self, "coefficient", coefficient)

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    def scaled(self, factor: float) -> PauliString:
        return PauliString(self.coefficient * factor, self.letters)


def pauli_term(n_qubits: int, ops: dict[int, str], coefficient: float = 1.0) -> PauliString:
    """Build a Pauli string from a sparse ``{qubit: letter}`` map, identity elsewhere."""
    letters = ["I"] * n_qubits
    for q, letter in ops.items():
        if not 0 <= q < n_qubits:
            raise ValueError(f"qubit {q} out of range for {n_qubits} qubits")
        letters[q] = letter
    return PauliString(coefficient, "".join(letters))


@dataclass(frozen=True)
class PauliSum:
    """A real linear combination of Pauli strings on a fixed number of qubits."""

    n_qubits: int
    terms: tuple[PauliString, ...] = ()

    def __post_init__(self):
        terms = tuple(self.terms)
        for t in terms:
            if t.n_qubits != self.n_qubits:
                raise ValueError(f"term {t.letters!r} does not act on {self.n_qubits} qubits")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_terms(cls, terms: Iterable[PauliString]) -> PauliSum:
        terms = tuple(terms)
        if not terms:
            raise ValueError("cannot infer qubit count from an empty term list")
        return cls(terms[0].n_qubits, terms)

    def __add__(self, other: PauliSum) -> PauliSum:
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit-count mismatch")
        return PauliSum(self.n_qubits, self.terms + other.terms)

    def __mul__(self, factor: float) -> PauliSum:
        return PauliSum(self.n_qubits, tuple(t.scaled(factor) for t in self.terms))

    __rmul__ = __mul__

    def __neg__(self) -> PauliSum:
        return self * -1.0

    def simplify(self, atol: float = 0.0) -> PauliSum:
        """Merge terms with equal letters (first-appearance order), dropping
        those whose merged coefficient is within ``atol`` of zero."""
        merged: dict[str, float] = {}
        for t in self.terms:
            merged[t.letters] = merged.get(t.letters, 0.0) + t.coefficient
        return PauliSum(
            self.n_qubits,
            tuple(PauliString(c, s) for s, c in merged.items() if abs(c) > atol),
        )

    def coefficients(self) -> dict[str, float]:
        """Letter string -> merged coefficient."""
        return {t.letters: t.coefficient for t in self.simplify().terms}


@dataclass(frozen=True)
class ParameterizedHamiltonian:
    """``H(a) = base + sum_k a[k] * couplings[k]``."""

    base: PauliSum
    couplings: tuple[PauliSum, ...]

    def __post_init__(self):
        couplings = tuple(self.couplings)
        for c in couplings:
            if c.n_qubits != self.base.n_qubits:
                raise ValueError("coupling acts on a different number of qubits than the base")
        object.__setattr__(self, "couplings", couplings)

    @property
    def n_qubits(self) -> int:
        return self.base.n_qubits

    @property
    def n_params(self) -> int:
        return len(self.couplings)

    def partial(self, k: int, a: Sequence[float] | None = None) -> PauliSum:
        """``dH/da_k``; the argument ``a`` is accepted for symmetry and ignored."""
        return self.couplings[k]

    def evaluate(self, a: Sequence[float]) -> PauliSum:
        return evaluate(self, a)


def evaluate(H: ParameterizedHamiltonian, a: Sequence[float]) -> PauliSum:
    """``H_0 + sum_k a_k H_k`` with like terms merged."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.shape != (H.n_params,):
        raise ValueError(f"expected {H.n_params} parameter(s), got shape {a.shape}")
    total = H.base
    for ak, Hk in zip(a, H.couplings):
        total = total + Hk * float(ak)
    return total.simplify()


def build_spin_chain(n: int, gamma: float = 1.0, delta: float = 1e-3) -> ParameterizedHamiltonian:
    """Open transverse-field Ising chain with a longitudinal field parameter.

    ``H(a) = -sum_i Z_i Z_{i+1} - gamma sum_i X_i - delta sum_i Z_i - a sum_i Z_i``.
    The stabilizing field ``delta`` sits in the base so that ``dH/da = -sum_i Z_i``.
    """
    if n < 2:
        raise ValueError(f"spin chain needs at least 2 sites, got {n}")
    base = [pauli_term(n, {i: "Z", i + 1: "Z"}, -1.0) for i in range(n - 1)]
    base += [pauli_term(n, {i: "X"}, -gamma) for i in range(n)]
    if delta != 0.0:
        base += [pauli_term(n, {i: "Z"}, -delta) for i in range(n)]
    field = PauliSum(n, tuple(pauli_term(n, {i: "Z"}, -1.0) for i in range(n)))
    return ParameterizedHamiltonian(PauliSum(n, tuple(base)), (field,))


def magnetization_observable(n: int) -> PauliSum:
    """Average magnetization ``(1/n) sum_i Z_i``."""
    if n < 1:
        raise ValueError(f"need at least one qubit, got {n}")
    return PauliSum(n, tuple(pauli_term(n, {i: "Z"}, 1.0 / n) for i in range(n)))
