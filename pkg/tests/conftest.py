"""Shared fixtures.  The heavy simulation runs are session-scoped so the
unit suites and the acceptance suite reuse one deterministic instance."""

import pytest

from gradtrack.certify import build_certificate
from gradtrack.cgt import IntegratorConfig, default_x0, run_cgt
from gradtrack.costs import (
    isotropic_quadratic_fixture,
    logistic_fixture,
    solve_centralized,
)
from gradtrack.dgt import run_dgt
from gradtrack.graph import erdos_renyi, metropolis_weights, ring
from gradtrack.trigger import async_run, sync_run


@pytest.fixture(scope="session")
def ring5():
    """Ring of five agents with isotropic quadratic costs (alpha = lips = 1)."""
    g = ring(5)
    problem = isotropic_quadratic_fixture(5, 2, seed=3)
    solve_centralized(problem)
    x0 = default_x0(problem, seed=11)
    return {"g": g, "problem": problem, "x0": x0}


@pytest.fixture(scope="session")
def ring5_cert(ring5):
    return build_certificate(ring5["g"], ring5["problem"])


@pytest.fixture(scope="session")
def ring5_cgt(ring5, ring5_cert):
    cfg = IntegratorConfig(h=1e-3, t_end=10.0)
    trace = run_cgt(
        ring5["problem"], ring5["g"], ring5["x0"], cfg,
        certificate=ring5_cert, record_states=True,
    )
    return {"trace": trace, "cfg": cfg}


@pytest.fixture(scope="session")
def ring5_sync_certified(ring5, ring5_cert):
    """Broadcast period at half the certified maximum, grid aligned."""
    delta = ring5_cert.delta_star / 2.0
    cfg = IntegratorConfig(h=delta, t_end=15.0)
    trace, log = sync_run(
        ring5["problem"], ring5["g"], ring5["x0"], delta, cfg,
        certificate=ring5_cert,
    )
    return {"trace": trace, "log": log, "delta": delta, "cfg": cfg}


@pytest.fixture(scope="session")
def ring5_async_certified(ring5, ring5_cert):
    """Trigger gain and decay rate chosen inside the certified region."""
    lam = ring5_cert.lambda_star / 2.0
    nu = 2.0 * ring5_cert.nu_star(lam)
    cfg = IntegratorConfig(h=1e-4, t_end=5.0)
    trace, log = async_run(
        ring5["problem"], ring5["g"], ring5["x0"],
        lam=lam, nu=nu, xi0=1.0, cfg=cfg, certificate=ring5_cert,
    )
    return {"trace": trace, "log": log, "lam": lam, "nu": nu, "cfg": cfg}


@pytest.fixture(scope="session")
def vib():
    """Ten-agent logistic benchmark: ER(0.4) graph, m_i = 10, C = 0.1."""
    problem = logistic_fixture(10, 3, 10, 0.1, seed=1)
    g = erdos_renyi(10, 0.4, seed=1)
    solve_centralized(problem)
    x0 = default_x0(problem, seed=2)
    return {"problem": problem, "g": g, "x0": x0, "w": metropolis_weights(g)}


@pytest.fixture(scope="session")
def vib_async(vib):
    cfg = IntegratorConfig(h=1e-3, t_end=30.0)
    trace, log = async_run(
        vib["problem"], vib["g"], vib["x0"], lam=0.1, nu=5.0, xi0=1.0, cfg=cfg
    )
    return {"trace": trace, "log": log, "cfg": cfg}


@pytest.fixture(scope="session")
def vib_sync(vib):
    cfg = IntegratorConfig(h=1e-3, t_end=30.0)
    trace, log = sync_run(vib["problem"], vib["g"], vib["x0"], 0.01, cfg)
    return {"trace": trace, "log": log, "cfg": cfg}


@pytest.fixture(scope="session")
def vib_dgt(vib):
    trace = run_dgt(vib["problem"], vib["w"], gamma=0.1, k_max=2000, x0=vib["x0"])
    return {"trace": trace}


@pytest.fixture(scope="session")
def iss_fixture():
    problem = logistic_fixture(5, 3, 10, 0.1, seed=13)
    solve_centralized(problem)
    return {"problem": problem, "g": ring(5)}


@pytest.fixture(scope="session")
def iss_reports(iss_fixture):
    from gradtrack.robust import iss_sweep

    return {
        variant: iss_sweep(
            iss_fixture["problem"], iss_fixture["g"], variant,
            [0, 0.01, 0.1], horizon=30.0, seed=14, h=2e-3,
        )
        for variant in ("cgt", "sync", "async")
    }


@pytest.fixture(scope="session")
def noise_removal_trace(iss_fixture):
    from gradtrack.robust import NoiseSampler, NoiseSpec

    problem, g = iss_fixture["problem"], iss_fixture["g"]
    noise = NoiseSampler(
        NoiseSpec(kind="uniform", amplitude=0.1, seed=14, t_stop=15.0),
        problem.n, problem.dim,
    )
    x0 = default_x0(problem, seed=14)
    return run_cgt(problem, g, x0, IntegratorConfig(h=2e-3, t_end=30.0), noise=noise)


@pytest.fixture(scope="session")
def n50_cgt():
    """Fifty-agent logistic benchmark on an ER(0.4) graph."""
    problem = logistic_fixture(50, 3, 10, 0.1, seed=42)
    g = erdos_renyi(50, 0.4, seed=42)
    solve_centralized(problem)
    x0 = default_x0(problem, seed=7)
    cfg = IntegratorConfig(h=1e-3, t_end=20.0)
    import time

    t0 = time.perf_counter()
    trace = run_cgt(problem, g, x0, cfg)
    elapsed = time.perf_counter() - t0
    return {"trace": trace, "elapsed": elapsed, "problem": problem, "g": g, "cfg": cfg}
