import numpy as np
import pytest

from implicit_vqa.observables import PauliString, PauliSum
from implicit_vqa.statevec import StateVector


def random_state(n, rng):
    amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return StateVector.from_amplitudes(amps, normalize=True)


def random_pauli_sum(n, n_terms, rng):
    terms = [
        PauliString(rng.normal(), "".join(rng.choice(list("IXYZ"), size=n)))
        for _ in range(n_terms)
    ]
    return PauliSum(n, tuple(terms))


def random_product_state(n, rng):
    """Kronecker product of random single-qubit states, built without the library."""
    out = np.array([1.0 + 0j])
    for _ in range(n):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        out = np.kron(out, v / np.linalg.norm(v))
    return StateVector(n, out)


BELL = StateVector(2, np.array([1, 0, 0, 1]) / np.sqrt(2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
