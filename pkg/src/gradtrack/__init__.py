"""Distributed consensus optimization by gradient tracking.

Continuous-time gradient tracking with its synchronous and asynchronous
sampled-communication variants, the discrete baseline, a numerical
Lyapunov-certificate engine for the stability thresholds, bounded-noise
robustness experiments and a benchmark CLI.
"""

from .graph import (
    ConsensusBasis,
    Graph,
    LaplacianSet,
    complete,
    consensus_basis,
    erdos_renyi,
    from_json,
    from_weights,
    laplacian,
    metropolis_weights,
    path,
    ring,
    to_json,
)
from .costs import (
    CostOracle,
    LogisticCost,
    Problem,
    QuadraticCost,
    SolverError,
    isotropic_quadratic_fixture,
    logistic_cost,
    logistic_fixture,
    quadratic_cost,
    quadratic_fixture,
    solve_centralized,
)
from .cgt import (
    CgtState,
    DivergenceError,
    IntegratorConfig,
    cgt_rhs,
    cgt_rhs_local,
    default_x0,
    integrate,
    run_cgt,
)
from .dgt import DgtState, dgt_step_causal, dgt_step_original, init_causal, init_original, run_dgt
from .trigger import (
    BroadcastCache,
    TriggeredState,
    async_run,
    async_trigger_check,
    sync_run,
    triggered_rhs,
    triggered_rhs_local,
    zeno_report,
)
from .certify import (
    Certificate,
    CertificateError,
    CoordinateMaps,
    build_certificate,
    build_maps,
    choose_m_eps,
    delta_star,
    from_zeta,
    lambda_nu_star,
    lyapunov,
    lyapunov_p,
    lyapunov_tilde,
    margin_q,
    perturbation_growth,
    qtilde,
    to_zeta,
)
from .robust import NoiseSampler, NoiseSpec, iss_sweep, perturbed_rhs
from .trace import EventLog, Trace, fit_decay_rate
from .bench import (
    ConfigError,
    ExperimentConfig,
    compare_comm_efficiency,
    emit_plots,
    parse_config,
    run_experiment,
)

__version__ = "0.1.0"
