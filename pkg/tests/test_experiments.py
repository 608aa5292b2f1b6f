import warnings

import numpy as np
import pytest

from implicit_vqa.circuits import two_design_ansatz
from implicit_vqa.diff import energy, expectation, grad_z
from implicit_vqa.experiments import render, run_entanglement, run_hyperopt, run_susceptibility
from implicit_vqa.experiments.entanglement import loss_and_grad, overlap_field
from implicit_vqa.experiments.hyperopt import hypergradient, setup
from implicit_vqa.experiments.susceptibility import initial_parameters
from implicit_vqa.implicit import LinearSolveConfig, OptimalityProblem, implicit_vjp, solve_map
from implicit_vqa.observables import build_spin_chain, magnetization_observable
from implicit_vqa.optim import GDConfig

DIRECT = LinearSolveConfig(method="direct")
QUIET = pytest.mark.filterwarnings("ignore::RuntimeWarning")


def test_susceptibility_matches_reoptimization_fd():
    n, layers, a0, eps = 2, 2, 0.5, 1e-4
    inner = GDConfig(0.1, 200000, 1e-10)
    result = run_susceptibility(n, layers, a_grid=[a0], inner=inner, cfg=DIRECT)
    assert result.converged.all()

    c = two_design_ansatz(n, layers)
    problem = OptimalityProblem.from_field(energy(c, build_spin_chain(n)))
    M = expectation(c, magnetization_observable(n))
    z = solve_map(problem, [a0], initial_parameters(c.n_trainable, 0), inner)
    fd = (M(solve_map(problem, [a0 + eps], z, inner)) - M(solve_map(problem, [a0 - eps], z, inner))) / (2 * eps)
    assert abs(result.chi_variational[0] - fd) <= 1e-3


def test_implicit_term_vanishes_for_the_energy_itself():
    # with the observable equal to H(a) the response reduces to <dH/da>
    n, layers = 3, 1
    c = two_design_ansatz(n, layers)
    H = build_spin_chain(n)
    field = energy(c, H)
    problem = OptimalityProblem.from_field(field)
    z = initial_parameters(c.n_trainable, 0)
    for a in (-0.4, 0.3):
        z = solve_map(problem, [a], z, GDConfig(0.1, 200000, 1e-9))
        implicit = implicit_vjp(problem, z, [a], grad_z(field, z, [a]), DIRECT)
        assert np.linalg.norm(implicit) < 1e-5


@QUIET
def test_susceptibility_pipeline_shapes_and_metadata():
    grid = np.linspace(-0.5, 0.5, 3)
    r = run_susceptibility(2, 1, a_grid=grid, inner=GDConfig(0.2, 2000, 1e-7))
    assert len(r.chi_variational) == len(r.chi_exact) == len(r.energy_exact) == 3
    assert np.array_equal(r.a_grid, grid)
    for key in ("n", "layers", "gamma", "delta", "seed", "damping", "solver", "inner"):
        assert key in r.metadata
    # variational principle up to the inner tolerance
    assert np.all(r.energy_variational >= r.energy_exact - 1e-6)


@QUIET
def test_susceptibility_flags_unconverged_points_and_continues():
    r = run_susceptibility(2, 1, a_grid=[0.1, 0.2], inner=GDConfig(0.05, 3, 1e-12))
    assert not r.converged.any()
    assert np.all(np.isfinite(r.chi_variational))


def test_susceptibility_rejects_large_chains():
    with pytest.raises(ValueError):
        run_susceptibility(11, 1, a_grid=[0.0])


@QUIET
def test_susceptibility_is_deterministic():
    kwargs = dict(a_grid=[-0.3, 0.3], inner=GDConfig(0.2, 500, 1e-7))
    assert render(run_susceptibility(2, 1, **kwargs)) == render(run_susceptibility(2, 1, **kwargs))


def test_hypergradient_matches_reoptimization_fd():
    circuit, train, val = setup(2, 8, 8, 0)
    problem = train.problem()
    s = np.log(np.full(len(train.groups), 0.05))
    inner = GDConfig(0.5, 200000, 1e-10)
    z = solve_map(problem, s, np.random.default_rng(0).uniform(-np.pi, np.pi, circuit.n_trainable), inner)
    hg = hypergradient(train, val, z, s, DIRECT, check_tol=1e-10)
    eps = 1e-4
    for l in range(len(s)):
        e = np.zeros_like(s)
        e[l] = eps
        fd = (val.value(solve_map(problem, s + e, z, inner)) - val.value(solve_map(problem, s - e, z, inner))) / (2 * eps)
        assert abs(hg[l] - fd) <= 1e-3


def test_training_derivatives_match_finite_differences(rng):
    from implicit_vqa.diff import fd_grad, fd_hessian

    _, train, _ = setup(2, 6, 4, 3)
    problem = train.problem()
    z = rng.uniform(-np.pi, np.pi, train.dim_z)
    s = np.log([0.02, 0.2])
    value, g = train.value_and_grad(z, s)
    assert np.max(np.abs(g - fd_grad(lambda x: train.value_and_grad(x, s)[0], z))) < 1e-6
    assert np.max(np.abs(problem.A(z, s) - fd_hessian(lambda x: train.value_and_grad(x, s)[0], z))) < 1e-4
    fd_B = np.column_stack([fd_grad(lambda t: problem.f(z, t)[i], s) for i in range(train.dim_z)]).T
    assert np.max(np.abs(problem.B(z, s) - fd_B)) < 1e-6


def test_penalty_jacobian_is_block_structured(rng):
    circuit, train, _ = setup(3, 4, 4, 0)
    z = rng.normal(size=circuit.n_trainable)
    s = np.zeros(len(train.groups))  # unit penalties
    B = train.problem().B(z, s)
    assert B.shape == (circuit.n_trainable, 3)
    for l, group in enumerate(train.groups):
        expected = np.zeros(circuit.n_trainable)
        expected[list(group)] = 2 * z[list(group)]
        assert np.allclose(B[:, l], expected)
    # the first weight block carries no penalty
    assert np.all(B[list(circuit.groups[0]), :] == 0)


def test_hyperopt_small_run():
    r = run_hyperopt(layers=2, n_train=12, n_val=8, outer_steps=2, inner=GDConfig(0.5, 20000, 1e-7), grid_size=3)
    assert len(r.outer_steps) == 3
    assert all(len(step.hyperparams) == 2 for step in r.outer_steps)
    assert np.allclose(r.outer_steps[0].hyperparams, 0.01)
    assert r.grid_points.shape == (9, 2) and np.all((r.grid_probabilities >= 0) & (r.grid_probabilities <= 1))
    assert r.metadata["dataset"]


def test_hyperopt_is_deterministic():
    run = lambda: render(run_hyperopt(layers=1, n_train=6, n_val=4, outer_steps=1,
                                      inner=GDConfig(0.5, 20000, 1e-7), grid_size=2), "csv")
    assert run() == run()


def test_hyperopt_validates_penalty():
    with pytest.raises(ValueError):
        run_hyperopt(layers=1, n_train=4, n_val=4, outer_steps=0, init_penalty=0.0)


@QUIET
def test_entanglement_loss_decreases_from_nearly_separable_start():
    a0 = np.random.default_rng(3).normal(0.0, 0.05, 6)
    r = run_entanglement(outer_steps=10, a_init=a0, inner=GDConfig(1.0, 2000, 1e-9))
    assert r.measures[0] < 0.01
    assert np.all(np.diff(r.losses) < 0)


def test_entanglement_exactly_separable_start_is_clamped():
    with pytest.warns(RuntimeWarning, match="clamping"):
        r = run_entanglement(outer_steps=1, a_init=np.zeros(6), inner=GDConfig(1.0, 2000, 1e-9))
    assert r.measures[0] == pytest.approx(1e-12)


@QUIET
def test_entanglement_records_are_consistent():
    r = run_entanglement(outer_steps=5, inner=GDConfig(1.0, 2000, 1e-9))
    assert len(r.outer_steps) == 6
    assert np.all((r.measures >= 0) & (r.measures <= 1))
    assert np.allclose(r.losses, -np.log(r.measures), atol=1e-9)
    assert np.linalg.norm(r.final_state) == pytest.approx(1.0)
    assert 0 <= r.nearest_separable_overlap <= 1


@QUIET
def test_entanglement_is_deterministic():
    run = lambda: render(run_entanglement(outer_steps=3, inner=GDConfig(1.0, 500, 1e-9), seed=4), "json")
    assert run() == run()


def test_implicit_correction_negligible_at_tight_inner_tolerance():
    overlap = overlap_field(2, 1)
    problem = OptimalityProblem.from_field(overlap_field(2, 1, sign=-1.0))
    a = np.random.default_rng(1).uniform(0, 2 * np.pi, 6)
    z = solve_map(problem, a, np.random.default_rng(2).uniform(0, 2 * np.pi, 6), GDConfig(1.0, 200000, 1e-10))
    assert np.max(np.abs(grad_z(overlap, z, a))) < 1e-8
    _, _, _, parts = loss_and_grad(overlap, problem, z, a, LinearSolveConfig(), check_tol=1e-10)
    assert np.linalg.norm(parts["implicit"]) < 1e-6 * np.linalg.norm(parts["direct"])


@QUIET
def test_implicit_term_matches_fd_of_inner_optimum():
    # E(a) = 1 - O(z*(a), a): the total derivative must match re-optimized differences
    overlap = overlap_field(2, 1)
    problem = OptimalityProblem.from_field(overlap_field(2, 1, sign=-1.0))
    rng = np.random.default_rng(5)
    a = rng.uniform(0, 2 * np.pi, 6)
    inner = GDConfig(1.0, 200000, 1e-11)
    z = solve_map(problem, a, rng.uniform(0, 2 * np.pi, 6), inner)
    _, E, grad, _ = loss_and_grad(overlap, problem, z, a, DIRECT, check_tol=1e-10)
    eps = 1e-4
    for k in range(6):
        e = np.zeros(6)
        e[k] = eps
        Lp = -np.log(1 - overlap(solve_map(problem, a + e, z, inner), a + e))
        Lm = -np.log(1 - overlap(solve_map(problem, a - e, z, inner), a - e))
        assert abs(grad[k] - (Lp - Lm) / (2 * eps)) < 1e-3


def test_circles_dataset():
    from implicit_vqa.experiments.hyperopt import circles_dataset

    x, y = circles_dataset(400, 0)
    r = np.linalg.norm(x, axis=1)
    assert x.shape == (400, 2) and np.all(np.abs(x) <= 1)
    assert set(np.unique(y)) == {0.0, 1.0} and 0.4 < y.mean() < 0.6
    assert r[y == 1].mean() < r[y == 0].mean() - 0.3
    assert np.array_equal(circles_dataset(50, 3)[0], circles_dataset(50, 3)[0])
