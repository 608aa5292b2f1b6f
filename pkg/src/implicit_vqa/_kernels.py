"""Compiled batch simulation of a whole circuit.

The gate list is flattened into integer/float tables and the full batch is
simulated inside one numba call, which removes the per-gate Python overhead of
the numpy path in :mod:`implicit_vqa.statevec`. Amplitudes are stored as
``(2**n, m)`` so that the innermost loop runs over batch rows with unit
stride. Results agree with the numpy path to rounding; the test suite checks
this.
"""

from __future__ import annotations

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

KIND_CODES = {"RX": 0, "RY": 1, "RZ": 2, "Rot": 3, "H": 4, "CZ": 5, "CNOT": 6, "SWAP": 7, "CSWAP": 8}
SOURCE_CODES = {"z": 0, "x": 1, "c": 2}

AVAILABLE = numba is not None

# Kinds with real matrices; circuits built only from these keep real amplitudes.
REAL_CODES = frozenset({KIND_CODES[k] for k in ("RY", "H", "CZ", "CNOT", "SWAP", "CSWAP")})


def is_real(codes: np.ndarray) -> bool:
    return all(int(c) in REAL_CODES for c in codes)


def compile_tables(gates) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Flatten gate templates to ``(codes, targets, sources, values)`` arrays."""
    G = len(gates)
    codes = np.empty(G, dtype=np.int64)
    targets = np.zeros((G, 3), dtype=np.int64)
    sources = np.full((G, 3), 2, dtype=np.int64)
    values = np.zeros((G, 3))
    for k, g in enumerate(gates):
        codes[k] = KIND_CODES[g.kind]
        targets[k, : len(g.targets)] = g.targets
        for j, s in enumerate(g.slots):
            sources[k, j] = SOURCE_CODES[s.source]
            values[k, j] = s.value
    return codes, targets, sources, values


if AVAILABLE:

    @numba.njit(cache=True)
    def _angles(source, value, Z, X, m):
        out = np.empty(m)
        if source == 2:
            out[:] = value
            return out
        col = int(value)
        src = Z if source == 0 else X
        if src.shape[0] == 1:
            out[:] = src[0, col]
        else:
            for r in range(m):
                out[r] = src[r, col]
        return out

    @numba.njit(cache=True)
    def _apply_2x2(psi, n, q, u00, u01, u10, u11):
        """Apply per-row 2x2 matrices ``u`` (arrays of length m) to qubit ``q``."""
        dim, m = psi.shape
        stride = 1 << (n - 1 - q)
        for base in range(0, dim, 2 * stride):
            for i in range(base, base + stride):
                j = i + stride
                for r in range(m):
                    a = psi[i, r]
                    b = psi[j, r]
                    psi[i, r] = u00[r] * a + u01[r] * b
                    psi[j, r] = u10[r] * a + u11[r] * b

    @numba.njit(cache=True)
    def _swap_rows(psi, i, j):
        for r in range(psi.shape[1]):
            tmp = psi[i, r]
            psi[i, r] = psi[j, r]
            psi[j, r] = tmp

    @numba.njit(cache=True)
    def _apply_fixed(psi, n, code, tg):
        """Parameter-free two- and three-qubit gates (sign flips and swaps)."""
        dim, m = psi.shape
        if code == 5:
            m0 = 1 << (n - 1 - tg[0])
            m1 = 1 << (n - 1 - tg[1])
            for i in range(dim):
                if (i & m0) and (i & m1):
                    for r in range(m):
                        psi[i, r] = -psi[i, r]
        elif code == 6:
            mc = 1 << (n - 1 - tg[0])
            mt = 1 << (n - 1 - tg[1])
            for i in range(dim):
                if (i & mc) and not (i & mt):
                    _swap_rows(psi, i, i | mt)
        else:
            if code == 7:
                mc = 0
                ma = 1 << (n - 1 - tg[0])
                mb = 1 << (n - 1 - tg[1])
            else:
                mc = 1 << (n - 1 - tg[0])
                ma = 1 << (n - 1 - tg[1])
                mb = 1 << (n - 1 - tg[2])
            for i in range(dim):
                if (i & mc) == mc and (i & ma) and not (i & mb):
                    _swap_rows(psi, i, (i ^ ma) | mb)

    @numba.njit(cache=True)
    def simulate_real(codes, targets, sources, values, Z, X, n):
        """Same as :func:`simulate` for circuits of real gates, in float64."""
        m = max(Z.shape[0], X.shape[0])
        psi = np.zeros((1 << n, m))
        psi[0, :] = 1.0
        h = np.full(m, 1.0 / np.sqrt(2.0))
        for k in range(codes.shape[0]):
            code = codes[k]
            if code == 1:
                th = _angles(sources[k, 0], values[k, 0], Z, X, m)
                c = np.cos(th / 2)
                s = np.sin(th / 2)
                _apply_2x2(psi, n, targets[k, 0], c, -s, s, c)
            elif code == 4:
                _apply_2x2(psi, n, targets[k, 0], h, h, h, -h)
            else:
                _apply_fixed(psi, n, code, targets[k])
        return psi.T.copy()

    @numba.njit(cache=True)
    def simulate(codes, targets, sources, values, Z, X, n):
        """Simulate every batch row from ``|0...0>``; returns ``(m, 2**n)`` complex amplitudes."""
        m = max(Z.shape[0], X.shape[0])
        psi = np.zeros((1 << n, m), dtype=np.complex128)
        psi[0, :] = 1.0
        zero = np.zeros(m, dtype=np.complex128)
        h = np.full(m, 1.0 / np.sqrt(2.0) + 0j)
        for k in range(codes.shape[0]):
            code = codes[k]
            q = targets[k, 0]
            if code <= 2:
                th = _angles(sources[k, 0], values[k, 0], Z, X, m)
                c = np.cos(th / 2) + 0j
                s = np.sin(th / 2) + 0j
                if code == 0:
                    _apply_2x2(psi, n, q, c, -1j * s, -1j * s, c)
                elif code == 1:
                    _apply_2x2(psi, n, q, c, -s, s, c)
                else:
                    _apply_2x2(psi, n, q, np.exp(-0.5j * th), zero, zero, np.exp(0.5j * th))
            elif code == 3:
                phi = _angles(sources[k, 0], values[k, 0], Z, X, m)
                th = _angles(sources[k, 1], values[k, 1], Z, X, m)
                om = _angles(sources[k, 2], values[k, 2], Z, X, m)
                c = np.cos(th / 2)
                s = np.sin(th / 2)
                plus = np.exp(-0.5j * (phi + om))
                minus = np.exp(0.5j * (phi - om))
                _apply_2x2(psi, n, q, plus * c, -minus * s, np.conj(minus) * s, np.conj(plus) * c)
            elif code == 4:
                _apply_2x2(psi, n, q, h, h, h, -h)
            else:
                _apply_fixed(psi, n, code, targets[k])
        return psi.T.copy()
