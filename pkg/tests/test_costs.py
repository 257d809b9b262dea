import numpy as np
import pytest

from gradtrack.costs import (
    Problem,
    isotropic_quadratic_fixture,
    load_dataset_csv,
    logistic_cost,
    logistic_fixture,
    quadratic_cost,
    quadratic_fixture,
    save_dataset_csv,
    solve_centralized,
)


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_quadratic_stationary_point():
    a = np.array([1.5, -2.0, 0.3])
    oracle = quadratic_cost(np.eye(3), -a)
    assert np.abs(oracle.grad(a)).max() < 1e-15


def test_quadratic_smoothness_constants():
    oracle = quadratic_cost(np.diag([2.0, 3.0]), np.zeros(2))
    assert oracle.alpha == pytest.approx(2.0)
    assert oracle.lips == pytest.approx(3.0)


def test_quadratic_rejects_non_spd():
    with pytest.raises(ValueError):
        quadratic_cost(np.diag([1.0, -0.5]), np.zeros(2))
    with pytest.raises(ValueError):
        quadratic_cost(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))


def test_quadratic_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((4, 4))
    oracle = quadratic_cost(m @ m.T + np.eye(4), rng.standard_normal(4))
    x = rng.standard_normal(4)
    assert np.abs(oracle.grad(x) - central_diff(oracle.eval, x)).max() < 1e-6


def test_logistic_regularizer_only():
    oracle = logistic_cost(np.zeros((0, 2)), np.zeros(0), c=0.1)
    x = np.array([1.0, -2.0, 3.0])
    assert oracle.eval(x) == pytest.approx(0.05 * float(x @ x))
    assert np.allclose(oracle.grad(x), 0.1 * x)


def test_logistic_single_point_at_origin():
    # sigmoid(0) = 1/2 makes the data gradient (0, 0, -1/2)
    oracle = logistic_cost(np.array([[0.0, 0.0]]), np.array([1.0]), c=0.1)
    x = np.zeros(3)
    assert oracle.eval(x) == pytest.approx(np.log(2.0))
    assert np.allclose(oracle.grad(x), [0.0, 0.0, -0.5])


def test_logistic_fixture_gradient_matches_finite_differences():
    problem = logistic_fixture(3, 3, 10, 0.1, seed=5)
    rng = np.random.default_rng(1)
    for oracle in problem.oracles:
        x = rng.uniform(-2, 2, size=3)
        fd = central_diff(oracle.eval, x)
        assert np.abs(oracle.grad(x) - fd).max() < 1e-5 * max(1.0, np.abs(fd).max())


def test_logistic_rejects_bad_labels():
    with pytest.raises(ValueError):
        logistic_cost(np.ones((2, 2)), np.array([1.0, 0.0]), c=0.1)
    with pytest.raises(ValueError):
        logistic_cost(np.ones((2, 2)), np.array([1.0, -1.0]), c=0.0)


@pytest.mark.parametrize(
    "problem",
    [
        quadratic_fixture(4, 3, seed=2),
        logistic_fixture(4, 3, 8, 0.1, seed=2),
    ],
    ids=["quadratic", "logistic"],
)
def test_sampled_convexity_and_lipschitz(problem):
    rng = np.random.default_rng(7)
    for oracle in problem.oracles:
        for _ in range(100):
            x = rng.uniform(-3, 3, oracle.dim)
            y = rng.uniform(-3, 3, oracle.dim)
            dg = oracle.grad(x) - oracle.grad(y)
            dx = x - y
            assert dg @ dx >= oracle.alpha * (dx @ dx) - 1e-9
            assert np.linalg.norm(dg) <= oracle.lips * np.linalg.norm(dx) + 1e-9


def test_problem_rejects_mixed_dimensions():
    with pytest.raises(ValueError):
        Problem([quadratic_cost(np.eye(2), np.zeros(2)), quadratic_cost(np.eye(3), np.zeros(3))])


def test_problem_smoothness_aggregation():
    problem = Problem(
        [
            quadratic_cost(np.diag([1.0, 5.0]), np.zeros(2)),
            quadratic_cost(np.diag([2.0, 3.0]), np.zeros(2)),
        ]
    )
    assert problem.alpha == pytest.approx(1.0)
    assert problem.lips == pytest.approx(5.0)


@pytest.mark.parametrize(
    "problem",
    [
        quadratic_fixture(5, 2, seed=3),
        logistic_fixture(5, 3, 6, 0.1, seed=3),
        Problem(
            [quadratic_cost(np.eye(2), np.array([1.0, 0.0]))]
            + [logistic_cost(np.ones((2, 1)), np.array([1.0, -1.0]), 0.5)]
        ),
    ],
    ids=["quadratic", "logistic", "mixed"],
)
def test_batched_gradients_match_per_oracle_loop(problem):
    rng = np.random.default_rng(4)
    x = rng.uniform(-2, 2, size=(problem.n, problem.dim))
    batch = problem.grad_block(x)
    loop = np.stack([o.grad(x[i]) for i, o in enumerate(problem.oracles)])
    assert np.abs(batch - loop).max() < 1e-12


def test_solve_centralized_mean_of_targets():
    problem = isotropic_quadratic_fixture(6, 3, seed=9)
    targets = np.stack([-o.b for o in problem.oracles])
    x = solve_centralized(problem)
    assert np.abs(x - targets.mean(axis=0)).max() < 1e-10


def test_solve_centralized_single_agent():
    oracle = quadratic_cost(np.diag([2.0, 4.0]), np.array([2.0, -4.0]))
    problem = Problem([oracle])
    x = solve_centralized(problem)
    assert np.allclose(x, [-1.0, 1.0], atol=1e-10)


def test_solve_centralized_logistic_residual():
    problem = logistic_fixture(5, 3, 10, 0.1, seed=6)
    x = solve_centralized(problem, tol=1e-12)
    assert np.linalg.norm(problem.grad_total(x)) < 1e-10
    assert problem.x_star is not None


def test_solve_centralized_permutation_invariant():
    problem = logistic_fixture(4, 3, 5, 0.1, seed=8)
    x1 = solve_centralized(problem, tol=1e-13)
    shuffled = Problem(problem.oracles[::-1])
    x2 = solve_centralized(shuffled, tol=1e-13)
    assert np.abs(x1 - x2).max() < 1e-9


def test_dataset_csv_round_trip(tmp_path):
    problem = logistic_fixture(3, 3, 4, 0.2, seed=10)
    path = tmp_path / "data.csv"
    save_dataset_csv(path, problem)
    loaded = load_dataset_csv(path, c=0.2)
    assert loaded.n == problem.n
    for a, b in zip(problem.oracles, loaded.oracles):
        assert np.abs(a.feats - b.feats).max() == 0.0
        assert np.array_equal(a.labels, b.labels)
