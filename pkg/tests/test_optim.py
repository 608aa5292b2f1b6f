import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from implicit_vqa.optim import ConvergenceError, GDConfig, minimize


def test_quadratic_converges():
    trace = minimize(lambda x: (x[0] - 3) ** 2, lambda x: 2 * (x - 3), [0.0], GDConfig(0.4, 1000, 1e-8))
    assert trace.converged
    assert trace.final_point[0] == pytest.approx(3.0, abs=1e-6)


def test_cosine_goes_to_pi():
    trace = minimize(lambda x: np.cos(x[0]), lambda x: -np.sin(x), [2.0], GDConfig(0.1, 5000, 1e-10))
    assert trace.final_point[0] == pytest.approx(np.pi, abs=1e-6)


def test_zero_gradient_stops_immediately():
    trace = minimize(lambda x: 1.0, lambda x: np.zeros_like(x), [1.0, 2.0], GDConfig())
    assert trace.converged and trace.n_steps == 0
    assert np.array_equal(trace.final_point, [1.0, 2.0])


def test_value_and_grad_callback_form():
    trace = minimize(None, lambda x: (float(x @ x), 2 * x), [1.0, -1.0], GDConfig(0.25, 100, 1e-12))
    assert trace.converged and trace.final_objective == pytest.approx(0.0, abs=1e-20)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_raises_with_last_iterate():
    # the step overshoots and the objective blows up
    with pytest.raises(ConvergenceError) as info:
        minimize(lambda x: float(np.exp(x[0] ** 2)), lambda x: 2 * x * np.exp(x**2), [2.0], GDConfig(10.0, 100, 1e-8))
    assert np.all(np.isfinite(info.value.last))


def test_not_converged_trace():
    trace = minimize(lambda x: x[0] ** 2, lambda x: 2 * x, [1.0], GDConfig(0.01, 5, 1e-12))
    assert not trace.converged and trace.n_steps == 5
    assert len(trace.iterates) == 6


def test_config_validation():
    with pytest.raises(ValueError):
        GDConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        GDConfig(tol=-1.0)
    with pytest.raises(ValueError):
        minimize(lambda x: 0.0, lambda x: x, [np.nan], GDConfig())


def test_converged_trace_records_small_gradient():
    trace = minimize(lambda x: (x[0] - 1) ** 2, lambda x: 2 * (x - 1), [0.0], GDConfig(0.3, 1000, 1e-9))
    assert trace.converged and trace.final_grad_norm <= 1e-9


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), frac=st.floats(0.05, 0.95))
def test_monotone_descent_on_convex_quadratic(seed, frac):
    rng = np.random.default_rng(seed)
    Q = rng.normal(size=(4, 4))
    Q = Q @ Q.T + 0.1 * np.eye(4)
    L = np.linalg.eigvalsh(Q).max()
    trace = minimize(lambda x: 0.5 * x @ Q @ x, lambda x: Q @ x, rng.normal(size=4), GDConfig(frac * 2 / L, 200, 0))
    values = np.array([f for _, f, _ in trace.iterates])
    assert np.all(np.diff(values) <= 1e-12)


def test_deterministic_trace():
    run = lambda: minimize(lambda x: np.sum(np.cos(x)), lambda x: -np.sin(x), [0.3, 2.0], GDConfig(0.1, 50, 1e-12))
    a, b = run(), run()
    assert a.iterates == b.iterates and a.final_point.tobytes() == b.final_point.tobytes()
