"""Command line entry point: ``sarlab train|sweep|probe-variance|trace|plot``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..envs import make_env
from ..macroact import RepetitionController
from ..pg import Agent
from ..tinynn import NumericalError
from ..varprobe import delta_scaling_sweep, estimate_pg_variance, fixture_agent, fixture_env
from .config import ConfigError, ExperimentConfig, load_config
from .plot import plot, probe_chart
from .runlog import PROBE_COLUMNS, CsvWriter, SchemaError
from .trace import MaskError, export_trace

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _params(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def cmd_train(args) -> int:
    from .experiment import run_experiment
    cfg = load_config(args.config)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    res = run_experiment(cfg)
    print(f"wrote {res['runlog']} and {res['summary']}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiment import sweep_delta
    cfg = load_config(args.config)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    res = sweep_delta(cfg)
    for d, msg in res["failures"].items():
        print(f"delta={d:g} failed: {msg}", file=sys.stderr)
    print(f"wrote {res['dir']}")
    if res["failures"] and any(m.startswith("NumericalError") for m in res["failures"].values()):
        return EXIT_NUMERICAL
    return EXIT_OK


def probe_sweep(env_id: str, ctrl: RepetitionController, deltas, n_traj: int, seeds, burn_in: int = 10,
                hidden=(256, 256), env_params=None, kind: str = ""):
    """Trace estimates of fresh random policies on ``env_id`` across ``deltas``."""
    probe_env = make_env(env_id, None, 0, env_params)

    def agent_factory(seed):
        return Agent.build(probe_env.obs_dim, probe_env.action_dim, ctrl,
                           np.random.default_rng(seed), hidden=hidden)

    def env_factory(delta, seed):
        return make_env(env_id, delta, seed, env_params)

    return delta_scaling_sweep(agent_factory, env_factory, deltas, n_traj, seeds, burn_in,
                               kind or ctrl.kind.value)


def cmd_probe(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = _ints(args.seeds)
    rows = []
    if args.fixture:
        deltas = _floats(args.deltas) if args.deltas else [1e-3]
        for d in deltas:
            for s in seeds:
                agent = fixture_agent(args.fixture, duration=args.x)
                env = fixture_env(d, args.x, args.nu, s)
                tr = estimate_pg_variance(agent, env, args.n_traj, args.burn_in,
                                          np.random.default_rng([s, 7919]))
                rows.append({"delta": d, "seed": s, "trace_estimate": tr, "n_traj": args.n_traj})
                print(f"fixture={args.fixture} delta={d:g} seed={s} trace={tr:.6g}")
        report = None
    else:
        c = {"kind": args.controller, "d_max": args.d_max, "t_max": args.t_max}
        if args.lam is not None:
            c["lambda"] = args.lam
        ctrl = ExperimentConfig(env_id=args.env, env_params=_params(args.param),
                                controller=c).make_controller()
        hidden = tuple(_ints(args.hidden))
        report = probe_sweep(args.env, ctrl, _floats(args.deltas or "0.04,0.02,0.01,0.005"), args.n_traj, seeds, args.burn_in,
                             hidden, _params(args.param))
        rows = list(report.rows())
        for d in report.deltas:
            print(f"delta={d:g} trace={report.mean(d):.6g} ci95={report.ci95(d):.3g}")
        if len(report.deltas) > 1:
            print(f"slope={report.slope:.4f}")
    csv_path = out / f"{args.name}.csv"
    with CsvWriter(csv_path, PROBE_COLUMNS) as w:
        for r in rows:
            w.write(r)
    bound = {"T": args.bound_T, "c": args.bound_c, "sigma_min": args.bound_sigma}
    if report is not None and len(report.deltas) > 1:
        probe_chart(report, out / f"{args.name}.svg", bound)
    else:
        plot([csv_path], {"bound": bound} if len({r["delta"] for r in rows}) > 1 else {},
             out / f"{args.name}.svg")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_trace(args) -> int:
    mask = _ints(args.mask) if args.mask else None
    res = export_trace(args.checkpoint, n_episodes=args.episodes, mask=mask, out_dir=args.out_dir,
                       seed=args.seed, name=args.name)
    print(f"wrote {res['csv']} and {res['svg']}")
    return EXIT_OK


def cmd_plot(args) -> int:
    spec = args.spec
    csvs = list(args.csv)
    # a JSON plot spec may trail the CSV paths
    if spec is None and csvs and not csvs[-1].endswith(".csv"):
        spec = csvs.pop()
    path = plot(csvs, spec, args.out)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sarlab", description="Action-repetition policy-gradient lab.")
    sub = p.add_subparsers(dest="cmd", required=True)

    t = sub.add_parser("train", help="train every seed of a config")
    t.add_argument("config")
    t.add_argument("--out-dir")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="train across the config's delta grid")
    s.add_argument("config")
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("probe-variance", help="Monte Carlo trace of the policy-gradient covariance")
    v.add_argument("--env", default="pendulum+ext_force")
    v.add_argument("--param", action="append", metavar="KEY=VALUE", help="environment parameter")
    v.add_argument("--controller", default="none", choices=["none", "sar", "lambda_sar", "figar_c", "fixed"])
    v.add_argument("--d-max", type=float, default=0.5)
    v.add_argument("--t-max", type=float, default=0.05)
    v.add_argument("--lam", type=float)
    v.add_argument("--deltas", help="comma list; default 0.04,0.02,0.01,0.005 (0.001 for fixtures)")
    v.add_argument("--n-traj", type=int, default=200)
    v.add_argument("--burn-in", type=int, default=10)
    v.add_argument("--seeds", default="0,1,2,3")
    v.add_argument("--hidden", default="256,256")
    v.add_argument("--fixture", choices=["sar", "figar_c"],
                   help="AlertThenOff analytic fixture instead of a random policy")
    v.add_argument("--x", type=float, default=0.01, help="fixture reaction window")
    v.add_argument("--nu", type=float, default=1e4, help="fixture penalty")
    v.add_argument("--bound-T", type=float, default=1.0)
    v.add_argument("--bound-c", type=float, default=1.0)
    v.add_argument("--bound-sigma", type=float, default=1.0)
    v.add_argument("--out-dir", default=".")
    v.add_argument("--name", default="probe")
    v.set_defaults(func=cmd_probe)

    r = sub.add_parser("trace", help="per-decision trace and safe-region SVG of a checkpoint")
    r.add_argument("checkpoint")
    r.add_argument("--episodes", type=int, default=10)
    r.add_argument("--mask", help="comma list of observation indices to plot")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out-dir", default=".")
    r.add_argument("--name", default="trace")
    r.set_defaults(func=cmd_trace)

    q = sub.add_parser("plot", help="chart CSV logs")
    q.add_argument("csv", nargs="+", help="CSV files, optionally followed by a JSON spec")
    q.add_argument("--spec", help="JSON text or .json file")
    q.add_argument("--out")
    q.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SchemaError, MaskError, FileNotFoundError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
