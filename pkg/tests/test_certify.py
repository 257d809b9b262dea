import json

import numpy as np
import pytest

from gradtrack.certify import (
    build_certificate,
    build_maps,
    choose_m_eps,
    delta_star,
    from_zeta,
    lambda_nu_star,
    lyapunov,
    lyapunov_p,
    lyapunov_tilde,
    m_lower_bounds,
    margin_q,
    perturbation_growth,
    qtilde,
    sync_constants,
    async_constants,
    to_zeta,
)
from gradtrack.cgt import CgtState, cgt_rhs
from gradtrack.costs import quadratic_fixture
from gradtrack.graph import erdos_renyi, from_weights, path, ring
from gradtrack.trace import fit_decay_rate
from gradtrack.trigger import BroadcastCache, TriggeredState, triggered_rhs


@pytest.fixture(scope="module")
def ring5_maps(ring5):
    return build_maps(ring5["g"], 2, ring5["problem"])


def _admissible_state(problem, seed):
    rng = np.random.default_rng(seed)
    n, d = problem.n, problem.dim
    x = rng.uniform(-4, 4, n * d)
    z = rng.uniform(-4, 4, n * d)
    z -= np.tile(z.reshape(n, d).mean(axis=0), n)  # 1^T z = 0
    return x, z


def test_t1_is_involutory(ring5_maps):
    rng = np.random.default_rng(0)
    v = rng.standard_normal(ring5_maps.t1.shape[0])
    assert np.abs(ring5_maps.t1 @ (ring5_maps.t1 @ v) - v).max() < 1e-12


def test_t2_is_orthogonal(ring5_maps):
    t2 = ring5_maps.t2
    assert np.abs(t2 @ t2.T - np.eye(t2.shape[0])).max() < 1e-12


def test_sync_perturbation_map_two_routes(ring5_maps):
    m = ring5_maps
    nd, n_red = m.nd, m.n_red
    right = np.block(
        [
            [m.t1 @ m.t_y.T, np.zeros((2 * nd, nd))],
            [np.zeros((nd, n_red)), np.eye(nd)],
        ]
    )
    product = m.t_y @ m.t1 @ m.b2 @ right
    assert np.abs(product - m.e).max() < 1e-12


def test_async_perturbation_map_two_routes(ring5_maps):
    m = ring5_maps
    product = m.t_y @ m.t1 @ m.b2
    assert np.abs(product - m.d_mat).max() < 1e-12


def test_reduced_matrix_small_path():
    g = path(2)
    problem = quadratic_fixture(2, 1, seed=1)
    maps = build_maps(g, 1, problem)
    assert maps.a.shape == (3, 3)
    eigs = np.linalg.eigvals(maps.a)
    assert np.all(eigs.real <= 1e-12)  # closed left half-plane


def test_reduced_dynamics_match_raw_flow(ring5, ring5_maps):
    problem = ring5["problem"]
    maps = ring5_maps
    g_star = problem.grad_stacked(np.tile(problem.x_star, 5))
    for seed in range(5):
        x, z = _admissible_state(problem, seed)
        zeta, _ = to_zeta(x, z, problem.x_star, problem, maps)
        dx, dz = cgt_rhs(CgtState(x=x, z=z), maps.l_big, problem)
        lhs = maps.t_y @ maps.t1 @ np.concatenate([dx, dz])
        u = g_star - problem.grad_stacked(x)
        assert np.abs(lhs - (maps.a @ zeta + maps.b @ u)).max() < 1e-10


def test_reduced_dynamics_with_broadcast_error(ring5, ring5_maps):
    # the stale-cache field equals the nominal one plus the D-mapped drift
    problem = ring5["problem"]
    maps = ring5_maps
    g_star = problem.grad_stacked(np.tile(problem.x_star, 5))
    rng = np.random.default_rng(42)
    x, z = _admissible_state(problem, 3)
    x_hat = x + rng.uniform(-0.2, 0.2, x.size)
    z_hat = z + rng.uniform(-0.2, 0.2, z.size)
    g_hat = problem.grad_stacked(x_hat)
    cache = BroadcastCache(x_hat, z_hat, g_hat, np.zeros(5))
    dx, dz = triggered_rhs(TriggeredState(x=x, z=z, cache=cache), maps.l_big, problem)
    zeta, _ = to_zeta(x, z, problem.x_star, problem, maps)
    u = g_star - problem.grad_stacked(x)
    e = np.concatenate([x_hat - x, z_hat - z, g_hat - problem.grad_stacked(x)])
    lhs = maps.t_y @ maps.t1 @ np.concatenate([dx, dz])
    rhs = maps.a @ zeta + maps.b @ u + maps.d_mat @ e
    assert np.abs(lhs - rhs).max() < 1e-10


@pytest.mark.parametrize("n", [3, 5, 8])
def test_chosen_weights_give_definite_forms(n):
    g = erdos_renyi(n, 0.6, seed=n)
    problem = quadratic_fixture(n, 2, seed=n)
    maps = build_maps(g, 2, problem)
    m, eps = choose_m_eps(maps, problem.alpha, problem.lips)
    p = lyapunov_p(maps, m)
    qt = qtilde(maps, p, m, problem.alpha, problem.lips, eps)
    assert np.linalg.eigvalsh(p)[0] > 0
    assert np.linalg.eigvalsh(qt)[0] > 0


def test_weight_below_schur_bound_breaks_definiteness(ring5_maps, ring5):
    problem = ring5["problem"]
    b1, _, _ = m_lower_bounds(ring5_maps, problem.alpha, problem.lips, 1.0)
    p_bad = lyapunov_p(ring5_maps, 0.95 * b1)
    assert np.linalg.eigvalsh(p_bad)[0] <= 1e-12


def test_weight_bound_scales_with_laplacian():
    g = ring(5)
    doubled = from_weights(2.0 * g.w_adj)
    problem = quadratic_fixture(5, 2, seed=4)
    m1 = build_maps(g, 2, problem)
    m2 = build_maps(doubled, 2, problem)
    _, b2_a, _ = m_lower_bounds(m1, 1.0, 1.0, 1.0)
    _, b2_b, _ = m_lower_bounds(m2, 1.0, 1.0, 1.0)
    # max eig(L^2) / min nonzero eig(L) doubles when L doubles
    assert b2_b == pytest.approx(2.0 * b2_a, rel=1e-10)


def test_margin_limit_is_qtilde_floor(ring5_cert):
    cert = ring5_cert
    tiny = 1e-12
    q_tiny, _ = margin_q(cert.qtilde_mat, cert.p, tiny, cert.beta)
    assert q_tiny == pytest.approx(np.linalg.eigvalsh(cert.qtilde_mat)[0], rel=1e-3)


def test_margin_positive_on_ring(ring5_cert):
    assert ring5_cert.q > 0


def test_margin_decreases_with_eps(ring5_cert):
    cert = ring5_cert
    q1 = np.linalg.eigvalsh(cert.qtilde_mat - cert.eps * cert.p @ cert.p)[0]
    q2 = np.linalg.eigvalsh(cert.qtilde_mat - 2 * cert.eps * cert.p @ cert.p)[0]
    assert q2 < q1


def test_period_threshold_zero_margin(ring5_maps):
    assert delta_star(ring5_maps, 0.0, beta=1.0, eps=0.5) == 0.0


def _bisect_period(beta, c2, s):
    blowup = np.log((beta + c2) / c2) / beta
    lo, hi = 0.0, blowup * (1 - 1e-15)
    while hi - lo > 1e-14:
        mid = 0.5 * (lo + hi)
        if perturbation_growth(mid, beta, c2) < s:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_period_threshold_matches_bisection(ring5_cert, ring5_maps):
    cert = ring5_cert
    s = np.sqrt(cert.q / cert.c1)
    numeric = _bisect_period(cert.beta, cert.c2, s)
    assert abs(cert.delta_star - numeric) < 1e-10


def test_period_threshold_below_blowup(ring5_cert):
    blowup = np.log((ring5_cert.beta + ring5_cert.c2) / ring5_cert.c2) / ring5_cert.beta
    assert 0 < ring5_cert.delta_star < blowup


def test_sync_run_inside_threshold_respects_ratio_monitor(ring5_sync_certified, ring5_cert):
    trace = ring5_sync_certified["trace"]
    r = trace.monitors["r"]
    assert r.max() < ring5_cert.r_limit
    rate, r2 = fit_decay_rate(trace.t, trace.err_x)
    assert rate > 0 and r2 > 0.95


def test_gain_threshold_endpoints(ring5_cert, ring5_maps):
    cert = ring5_cert
    lam_star, nu_star = lambda_nu_star(ring5_maps, cert.p, cert.q, cert.beta)
    assert lam_star > 0
    nu0 = nu_star(0.0)
    assert np.isfinite(nu0) and nu0 > 0
    assert nu0 == pytest.approx(cert.c6**2 / cert.q, rel=1e-12)
    assert nu_star(0.999999 * lam_star) > 1e5 * nu0
    assert nu_star(lam_star) == np.inf


def test_async_run_inside_thresholds_converges(ring5_async_certified):
    trace = ring5_async_certified["trace"]
    rate, r2 = fit_decay_rate(trace.t, trace.err_x)
    assert rate > 0 and r2 > 0.95


def test_error_coordinates_vanish_at_equilibrium(ring5, ring5_maps):
    problem = ring5["problem"]
    x_eq = np.tile(problem.x_star, 5)
    z_eq = -problem.grad_stacked(x_eq)
    zeta, eta_avg = to_zeta(x_eq, z_eq, problem.x_star, problem, ring5_maps)
    assert np.abs(zeta).max() < 1e-12
    assert np.abs(eta_avg).max() < 1e-12


def test_average_mode_invariant_under_admissible_tracker(ring5, ring5_maps):
    problem = ring5["problem"]
    for seed in range(10):
        x, z = _admissible_state(problem, seed + 100)
        _, eta_avg = to_zeta(x, z, problem.x_star, problem, ring5_maps)
        assert np.abs(eta_avg).max() < 1e-10


def test_error_coordinates_round_trip(ring5, ring5_maps):
    problem = ring5["problem"]
    g_star = problem.grad_stacked(np.tile(problem.x_star, 5))
    x, z = _admissible_state(problem, 17)
    zeta, _ = to_zeta(x, z, problem.x_star, problem, ring5_maps)
    x_err, z_err = from_zeta(zeta, ring5_maps)
    assert np.abs(x_err - (x - np.tile(problem.x_star, 5))).max() < 1e-12
    assert np.abs(z_err - (z + g_star)).max() < 1e-12


def test_quadratic_form_basics(ring5_cert):
    p = ring5_cert.p
    zeta = np.zeros(p.shape[0])
    assert lyapunov(zeta, p) == 0.0
    rng = np.random.default_rng(3)
    zeta = rng.standard_normal(p.shape[0])
    assert lyapunov(2 * zeta, p) == pytest.approx(4 * lyapunov(zeta, p), rel=1e-12)
    xi = rng.standard_normal(4)
    assert lyapunov_tilde(zeta, xi, p) == pytest.approx(
        lyapunov(zeta, p) + 0.5 * float(xi @ xi)
    )


def test_decrement_inequality_on_random_states(ring5, ring5_cert):
    # 2 zeta' P (A zeta + B u) <= -zeta' Qtilde zeta for the true feedback u
    problem = ring5["problem"]
    cert = ring5_cert
    maps = cert.maps
    for seed in range(200):
        x, z = _admissible_state(problem, seed)
        zeta, _ = cert.zeta_of(x, z)
        u = cert.g_star - problem.grad_stacked(x)
        vdot = 2.0 * zeta @ cert.p @ (maps.a @ zeta + maps.b @ u)
        assert vdot <= -zeta @ cert.qtilde_mat @ zeta + 1e-9


def test_pseudoinverse_reconstruction():
    for seed in (0, 1):
        g = erdos_renyi(7, 0.5, seed=seed)
        maps = build_maps(g, 2)
        l2 = maps.l_small @ maps.l_small
        assert np.abs(l2 @ maps.l2_pinv @ l2 - l2).max() < 1e-10


@pytest.mark.parametrize("n", range(2, 11))
@pytest.mark.parametrize("d", [1, 2, 3])
def test_certificate_definiteness_grid(n, d):
    g = erdos_renyi(n, 0.7, seed=n * 10 + d) if n > 2 else path(2)
    problem = quadratic_fixture(n, d, seed=n * 10 + d)
    cert = build_certificate(g, problem)
    assert np.linalg.eigvalsh(cert.p)[0] > 0
    assert np.linalg.eigvalsh(cert.qtilde_mat)[0] > 0
    assert cert.q > 0
    assert cert.delta_star > 0
    assert cert.lambda_star > 0
    assert np.isfinite(cert.nu_star(cert.lambda_star / 2.0))


def test_certificate_json_export(ring5_cert):
    doc = json.loads(ring5_cert.to_json())
    expected = {
        "m", "eps", "q", "c1", "c2", "c3", "c4", "c5", "c6",
        "delta_star", "lambda_star", "nu_star_at_lambda",
        "lambda_for_nu_star", "eig_min_P", "eig_min_Qtilde",
    }
    assert expected <= set(doc)
    assert doc["eig_min_P"] > 0
    assert doc["eig_min_Qtilde"] > 0
    assert doc["nu_star_at_lambda"] > 0


def test_constants_are_consistent(ring5_cert, ring5_maps):
    c1, c2 = sync_constants(ring5_maps, ring5_cert.beta, ring5_cert.eps)
    assert c1 == pytest.approx(ring5_cert.c1)
    assert c2 == pytest.approx(ring5_cert.c2)
    c3, c4, c5, c6 = async_constants(ring5_maps, ring5_cert.p, ring5_cert.beta)
    assert (c3, c4) == (pytest.approx(ring5_cert.c3), pytest.approx(ring5_cert.c4))
    assert c5 == pytest.approx(ring5_cert.c5)
    assert c6 == pytest.approx(ring5_cert.c6)
    # c4 aggregates per-agent norms; c5 additionally pays the coordinate change
    assert ring5_cert.c4 == pytest.approx(ring5_cert.c3 * np.sqrt(5))


def test_certificate_requires_connected_graph():
    w = np.eye(4)
    w[0, 1] = w[1, 0] = 1.0
    w[2, 3] = w[3, 2] = 1.0  # two components
    g = from_weights(w)
    with pytest.raises(ValueError):
        build_maps(g, 1)
