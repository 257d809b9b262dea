"""Command-line interface.

Subcommands: run, sweep, compare, certify, plot.  Exit codes: 0 success,
2 divergence guard tripped, 3 configuration error.  The GRADTRACK_SEED
environment variable overrides the config seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import (
    ConfigError,
    ExperimentConfig,
    compare_comm_efficiency,
    emit_plots,
    load_config,
    run_experiment,
    sweep,
    _setup,
)
from .cgt import DivergenceError
from .certify import CertificateError, build_certificate
from .trace import EventLog, Trace


def _parse_sweep_values(text: str):
    name, _, raw = text.partition("=")
    if not raw:
        raise ConfigError("--param expects name=v1,v2,...")
    return name, [float(v) for v in raw.split(",")]


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    summary = run_experiment(cfg, args.out, certify=args.certify)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    name, values = _parse_sweep_values(args.param)
    results = sweep(cfg, name, values, args.out, certify=args.certify)
    print(json.dumps({f"{name}={k:g}": v for k, v in results.items()},
                     indent=2, sort_keys=True))
    return 0


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    if cfg.compare is None:
        raise ConfigError("config lacks a 'compare' section")
    target = float(args.target_err or cfg.compare.get("target_err", 1e-4))
    variants = cfg.compare.get("variants")
    if not variants:
        raise ConfigError("compare.variants must list at least one variant")
    cfgs = []
    for spec in variants:
        cfgs.append(
            ExperimentConfig(
                seed=cfg.seed,
                problem=dict(cfg.problem),
                graph=dict(cfg.graph),
                variant=spec["variant"],
                params=dict(spec.get("params", {})),
                integrator=dict(spec.get("integrator", cfg.integrator)),
                x0=dict(cfg.x0),
            )
        )
    table = compare_comm_efficiency(cfgs, target)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.json").write_text(json.dumps(table, indent=2, sort_keys=True))
    print(json.dumps(table, indent=2, sort_keys=True))
    return 0


def cmd_certify(args) -> int:
    cfg = load_config(args.config)
    problem, g, _, _ = _setup(cfg)
    cert = build_certificate(g, problem)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "certificate.json").write_text(cert.to_json())
    print(cert.to_json())
    return 0


def cmd_plot(args) -> int:
    run_dir = Path(args.run_dir)
    trace_path = run_dir / "trace.csv"
    if not trace_path.exists():
        raise ConfigError(f"{trace_path} not found")
    trace = Trace.from_csv(trace_path)
    events = None
    if (run_dir / "events.csv").exists():
        events = EventLog.from_csv(run_dir / "events.csv")
    out = args.out or run_dir
    written = emit_plots({run_dir.name: trace}, events, out,
                         horizon=float(trace.t[-1]))
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradtrack",
        description="Gradient-tracking simulators, certificates and benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configured experiment")
    p_run.add_argument("config")
    p_run.add_argument("--out", default="out")
    p_run.add_argument("--certify", action="store_true",
                       help="attach a Lyapunov certificate and export it")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one variant parameter")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True, help="name=v1,v2,...")
    p_sweep.add_argument("--out", default="out")
    p_sweep.add_argument("--certify", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", help="communication-efficiency table")
    p_cmp.add_argument("config")
    p_cmp.add_argument("--target-err", type=float, default=None)
    p_cmp.add_argument("--out", default="out")
    p_cmp.set_defaults(func=cmd_compare)

    p_cert = sub.add_parser("certify", help="compute certified thresholds")
    p_cert.add_argument("config")
    p_cert.add_argument("--out", default="out")
    p_cert.set_defaults(func=cmd_certify)

    p_plot = sub.add_parser("plot", help="render SVG charts for a run dir")
    p_plot.add_argument("run_dir")
    p_plot.add_argument("--out", default=None)
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CertificateError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
