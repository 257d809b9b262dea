"""Experiment runner: config parsing, artifact emission, comparisons.

A single JSON document describes problem, graph, algorithm variant and
integrator; running it produces trace.csv (fixed schema), events.csv for
triggered variants, optional certificate.json and a summary.json with the
fitted decay rate and communication totals.  Identical config and seed
give byte-identical artifacts.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cgt import DivergenceError, IntegratorConfig, default_x0, run_cgt
from .certify import build_certificate
from .costs import (
    Problem,
    isotropic_quadratic_fixture,
    logistic_fixture,
    quadratic_fixture,
    solve_centralized,
)
from .dgt import run_dgt
from .graph import Graph, complete, erdos_renyi, metropolis_weights, path, ring
from .robust import NoiseSampler, NoiseSpec
from .svgplot import event_raster, line_chart
from .trace import EventLog, Trace, fit_decay_rate
from .trigger import async_run, sync_run, zeno_report

VARIANTS = ("cgt", "dgt", "sync", "async")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    seed: int
    problem: dict
    graph: dict
    variant: str
    params: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    noise: dict | None = None
    x0: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    compare: dict | None = None


_REQUIRED_PARAMS = {
    "cgt": set(),
    "dgt": {"gamma"},
    "sync": {"delta"},
    "async": {"lambda", "nu"},
}
_ALLOWED_PARAMS = {
    "cgt": set(),
    "dgt": {"gamma", "k_max", "form"},
    "sync": {"delta"},
    "async": {"lambda", "nu", "xi0", "force_trigger", "use_xi"},
}


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a config document; GRADTRACK_SEED overrides the seed."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - {
        "seed", "problem", "graph", "variant", "params", "integrator",
        "noise", "x0", "output", "compare",
    }
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = ExperimentConfig(
            seed=int(doc["seed"]),
            problem=dict(doc["problem"]),
            graph=dict(doc["graph"]),
            variant=str(doc["variant"]),
            params=dict(doc.get("params", {})),
            integrator=dict(doc.get("integrator", {})),
            noise=dict(doc["noise"]) if doc.get("noise") else None,
            x0=dict(doc.get("x0", {})),
            output=dict(doc.get("output", {})),
            compare=dict(doc["compare"]) if doc.get("compare") else None,
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key: {exc}") from None
    env_seed = os.environ.get("GRADTRACK_SEED")
    if env_seed is not None:
        cfg.seed = int(env_seed)
    if cfg.variant not in VARIANTS:
        raise ConfigError(f"variant must be one of {VARIANTS}")
    missing = _REQUIRED_PARAMS[cfg.variant] - set(cfg.params)
    if missing:
        raise ConfigError(f"variant {cfg.variant!r} needs params {sorted(missing)}")
    extra = set(cfg.params) - _ALLOWED_PARAMS[cfg.variant]
    if extra:
        raise ConfigError(f"params {sorted(extra)} not valid for {cfg.variant!r}")
    if cfg.variant != "dgt" and not cfg.integrator.get("t_end"):
        raise ConfigError("integrator.t_end is required for continuous variants")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return parse_config(doc)


def build_problem(spec: dict, seed: int) -> Problem:
    kind = spec.get("kind")
    if kind == "logistic":
        return logistic_fixture(
            n_agents=int(spec["n_agents"]),
            d=int(spec.get("d", 3)),
            m_i=int(spec.get("m_i", 10)),
            c=float(spec.get("C", 0.1)),
            seed=seed,
        )
    if kind == "quadratic":
        return quadratic_fixture(
            n_agents=int(spec["n_agents"]),
            d=int(spec.get("d", 2)),
            seed=seed,
            cond=float(spec.get("cond", 4.0)),
        )
    if kind == "isotropic_quadratic":
        return isotropic_quadratic_fixture(
            n_agents=int(spec["n_agents"]), d=int(spec.get("d", 2)), seed=seed
        )
    raise ConfigError(f"unknown problem kind {kind!r}")


def build_graph(spec: dict, seed: int) -> Graph:
    kind = spec.get("kind")
    n = int(spec["n"])
    if kind == "erdos_renyi":
        return erdos_renyi(n, float(spec.get("p", 0.4)), seed)
    if kind == "ring":
        return ring(n)
    if kind == "path":
        return path(n)
    if kind == "complete":
        return complete(n)
    raise ConfigError(f"unknown graph kind {kind!r}")


def _setup(cfg: ExperimentConfig):
    problem_spec = dict(cfg.problem)
    if "n_agents" not in problem_spec:
        problem_spec["n_agents"] = cfg.graph["n"]  # agent count follows the graph
    elif int(problem_spec["n_agents"]) != int(cfg.graph["n"]):
        raise ConfigError("problem n_agents and graph n disagree")
    problem = build_problem(problem_spec, seed=_sub(cfg.seed, 0))
    g = build_graph(cfg.graph, seed=_sub(cfg.seed, 1))
    solve_centralized(problem)
    x0 = default_x0(
        problem,
        seed=_sub(cfg.seed, 2),
        low=float(cfg.x0.get("low", -5.0)),
        high=float(cfg.x0.get("high", 5.0)),
    )
    noise = None
    if cfg.noise is not None:
        spec = NoiseSpec(
            kind=cfg.noise.get("kind", "uniform"),
            amplitude=float(cfg.noise.get("amplitude", 0.0)),
            seed=_sub(cfg.seed, 3),
            t_stop=cfg.noise.get("t_stop"),
        )
        noise = NoiseSampler(spec, problem.n, problem.dim)
    return problem, g, x0, noise


def _sub(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def _integrator(cfg: ExperimentConfig) -> IntegratorConfig:
    return IntegratorConfig(
        h=float(cfg.integrator.get("h", 1e-3)),
        t_end=float(cfg.integrator.get("t_end", 10.0)),
        method=cfg.integrator.get("method", "rk4"),
    )


def run_variant(cfg: ExperimentConfig, certificate=None):
    """Execute the configured variant; returns (trace, events_or_None)."""
    problem, g, x0, noise = _setup(cfg)
    if cfg.variant == "dgt":
        w = metropolis_weights(g)
        trace = run_dgt(
            problem,
            w,
            gamma=float(cfg.params["gamma"]),
            k_max=int(cfg.params.get("k_max", 1000)),
            form=cfg.params.get("form", "causal"),
            x0=x0,
        )
        return trace, None, problem, g
    icfg = _integrator(cfg)
    if cfg.variant == "cgt":
        decimation = int(cfg.output.get("decimation", 1))
        trace = run_cgt(
            problem, g, x0, icfg, certificate=certificate, noise=noise,
            decimation=decimation, record_per_agent=True,
        )
        return trace, None, problem, g
    if cfg.variant == "sync":
        trace, events = sync_run(
            problem, g, x0, float(cfg.params["delta"]), icfg,
            certificate=certificate, noise=noise,
        )
        return trace, events, problem, g
    trace, events = async_run(
        problem,
        g,
        x0,
        lam=float(cfg.params["lambda"]),
        nu=float(cfg.params["nu"]),
        xi0=float(cfg.params.get("xi0", 1.0)),
        cfg=icfg,
        certificate=certificate,
        noise=noise,
        force_trigger=bool(cfg.params.get("force_trigger", False)),
        use_xi=bool(cfg.params.get("use_xi", True)),
    )
    return trace, events, problem, g


def run_experiment(cfg: ExperimentConfig, out_dir, certify: bool = False) -> dict:
    """Run one configured experiment and write its artifact bundle."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    certificate = None
    if certify:
        problem, g, _, _ = _setup(cfg)
        certificate = build_certificate(g, problem)
        (out / "certificate.json").write_text(certificate.to_json())
    try:
        trace, events, problem, g = run_variant(cfg, certificate=certificate)
    except DivergenceError as exc:
        summary = {"status": "diverged", "error": str(exc), "variant": cfg.variant}
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        raise

    trace.to_csv(out / "trace.csv")
    if events is not None:
        events.to_csv(out / "events.csv")

    summary = {
        "status": "ok",
        "variant": cfg.variant,
        "seed": cfg.seed,
        "final_err": float(trace.err_x[-1]),
        "initial_err": float(trace.err_x[0]),
        "max_z_mean_norm": float(trace.z_mean_norm.max()),
        "total_comm": int(trace.comm_total[-1]),
    }
    try:
        rate, r2 = fit_decay_rate(trace.t, trace.err_x)
        summary["decay_rate"] = rate
        summary["decay_r2"] = r2
    except ValueError:
        summary["decay_rate"] = None
    if trace.per_agent_comm is not None:
        summary["per_agent_comm"] = [int(v) for v in trace.per_agent_comm[-1]]
    if events is not None:
        horizon = float(trace.t[-1])
        report = zeno_report(events, horizon)
        summary["min_event_gap"] = min(
            (a["min_gap"] for a in report["agents"] if a["min_gap"] is not None),
            default=None,
        )
        summary["zeno_flagged"] = report["flagged"]
        (out / "zeno.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary


def sweep(cfg: ExperimentConfig, param: str, values, out_dir, certify: bool = False):
    """Re-run the experiment for each value of one variant parameter."""
    results = {}
    for value in values:
        sub_cfg = ExperimentConfig(
            seed=cfg.seed,
            problem=dict(cfg.problem),
            graph=dict(cfg.graph),
            variant=cfg.variant,
            params={**cfg.params, param: value},
            integrator=dict(cfg.integrator),
            noise=dict(cfg.noise) if cfg.noise else None,
            x0=dict(cfg.x0),
            output=dict(cfg.output),
        )
        sub_dir = Path(out_dir) / f"{param}={value:g}"
        results[value] = run_experiment(sub_cfg, sub_dir, certify=certify)
    return results


def first_crossing_comm(trace: Trace, target_err: float):
    """Most-efficient-agent broadcast count when its error first drops
    below the target; returns (count, agent, t_hit) or None."""
    if trace.per_agent_err is None:
        raise ValueError("trace lacks per-agent errors")
    comm = trace.per_agent_comm
    if comm is None:
        comm = np.tile(trace.comm_total[:, None], (1, trace.per_agent_err.shape[1]))
    best = None
    for agent in range(trace.per_agent_err.shape[1]):
        below = np.flatnonzero(trace.per_agent_err[:, agent] < target_err)
        if below.size == 0:
            continue
        idx = below[0]
        count = int(comm[idx, agent])
        if best is None or count < best[0]:
            best = (count, agent, float(trace.t[idx]))
    return best


def compare_comm_efficiency(cfgs: list, target_err: float) -> list:
    """Fewest per-agent communication rounds to reach the target error.

    All configs must share problem and graph.  Counting conventions: dgt
    agents broadcast once per iteration (count = k), triggered agents are
    counted per logged event including the initial broadcast.
    """
    if not cfgs:
        raise ConfigError("need at least one variant to compare")
    ref = (cfgs[0].problem, cfgs[0].graph, cfgs[0].seed)
    rows = []
    for cfg in cfgs:
        if (cfg.problem, cfg.graph, cfg.seed) != ref:
            raise ConfigError("compared variants must share problem, graph and seed")
        trace, _events, _problem, _g = run_variant(cfg)
        hit = first_crossing_comm(trace, target_err)
        rows.append(
            {
                "variant": cfg.variant,
                "reached": hit is not None,
                "comm_count": hit[0] if hit else None,
                "agent": hit[1] + 1 if hit else None,
                "t_hit": hit[2] if hit else None,
            }
        )
    return rows


def emit_plots(traces: dict, events: EventLog | None, out_dir, horizon: float | None = None):
    """Write the standard chart set for a bundle of runs.

    ``traces`` maps a label to a Trace.  Produces error-vs-time and
    error-vs-communication line charts (log scale) plus an event raster
    when an event log is given.  Returns the list of files written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    series_t = [(label, tr.t, tr.err_x) for label, tr in traces.items()]
    path_t = out / "error_vs_time.svg"
    line_chart(series_t, path_t, title="distance from optimum", xlabel="t",
               ylabel="log10 error")
    written.append(path_t)

    series_c = []
    for label, tr in traces.items():
        if tr.per_agent_comm is not None and tr.per_agent_err is not None:
            counts = tr.per_agent_comm[-1]
            agent = int(np.argmin(counts))
            series_c.append((label, tr.per_agent_comm[:, agent], tr.per_agent_err[:, agent]))
        else:
            series_c.append((label, tr.comm_total, tr.err_x))
    path_c = out / "error_vs_comm.svg"
    line_chart(series_c, path_c, title="most efficient agent",
               xlabel="communication rounds", ylabel="log10 error")
    written.append(path_c)

    if events is not None and len(events):
        if horizon is None:
            horizon = max(t for t, _, _ in events.events)
        path_r = out / "events_raster.svg"
        event_raster(events.events, events.n_agents, horizon, path_r)
        written.append(path_r)
    return written
