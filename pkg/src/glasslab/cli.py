"""Command-line entry point: ``glasslab <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from . import __version__
from .harness import EXPERIMENTS, OUTPUT_ENV, ExperimentConfig
from .meanfield import solve_mean_field
from .model import CouplingDist, FieldDist, ModelParams
from .sampler import ChainConfig, SampleBatch, draw_batch
from .variance import compute_variances


def _floats(s):
    return tuple(float(x) for x in str(s).split(",") if x)


def _ints(s):
    return tuple(int(x) for x in str(s).split(",") if x)


def _strs(s):
    return tuple(x for x in str(s).split(",") if x)


def _output_dir(args):
    return args.output or os.environ.get(OUTPUT_ENV, ".")


def _emit(obj):
    print(json.dumps(obj, indent=1, default=float))


def _table(d: dict) -> str:
    w = max(len(k) for k in d)
    return "\n".join(f"{k:<{w}}  {v}" for k, v in d.items())


def cmd_simulate(args):
    clique = _ints(args.clique) if args.clique else None
    p = ModelParams(
        n=args.n, k=args.k, theta=args.theta, theta1=args.theta1, clique=clique,
        field_dist=FieldDist.parse(args.field), coupling_dist=CouplingDist(args.coupling),
    )
    chain = ChainConfig(args.burn_in, args.thin, args.init)
    b = draw_batch(p, args.m, chain, not args.shared_disorder, args.seed)
    out = _output_dir(args)
    os.makedirs(out, exist_ok=True)
    path = args.file or os.path.join(out, "batch.glsb")
    b.save(path)
    if args.csv:
        with open(os.path.splitext(path)[0] + ".csv", "w") as fh:
            fh.write(b.to_csv())
    _emit({"batch": path, **b.header()})


def cmd_meanfield(args):
    sol = solve_mean_field(args.c, args.theta, args.theta1, FieldDist.parse(args.field))
    d = sol.to_dict()
    _emit(d)
    print(_table(d), file=sys.stderr)


def cmd_variance(args):
    lv = compute_variances(args.c, args.theta, args.theta1, FieldDist.parse(args.field))
    _emit(lv.to_dict())


def cmd_test(args):
    from .detection import run_test

    b = SampleBatch.load(args.input)
    kw = {}
    if args.branch and args.regime in ("high", "low", "critical", "auto"):
        kw["branch"] = args.branch
    d = run_test(b, b.params, args.regime, args.delta, **kw)
    _emit(d.to_dict())


def cmd_recover(args):
    from .recovery import recover_pipeline

    b = SampleBatch.load(args.input)
    p = b.params
    if args.k is not None and args.k != p.k:
        p = replace(p, k=args.k, clique=tuple(range(args.k)))
    truth = None
    if args.truth == "header":
        truth = b.params.clique
    elif args.truth:
        truth = _ints(args.truth)
    regime = None if args.regime == "auto" else args.regime
    _emit(recover_pipeline(b, p, truth, regime).to_dict())


def _config_from_args(name, args) -> ExperimentConfig:
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    base.setdefault("name", name)
    for key, conv in (("n", _ints), ("k", _ints), ("theta", _floats), ("theta1", _floats), ("field", _strs), ("coupling", _strs)):
        v = getattr(args, key)
        if v is not None:
            base[key] = list(conv(v))
    for key in ("m_schedule", "m_constant", "m_scale", "replications", "draws", "delta", "regime", "placements"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    if args.recovery:
        base["recovery"] = True
    if args.burn_in is not None:
        base["chain"] = {**base.get("chain", {}), "burn_in_sweeps": args.burn_in}
    base["seed"] = args.seed
    base["output"] = _output_dir(args)
    return ExperimentConfig.from_dict(base)


def cmd_experiment(args):
    cfg = _config_from_args(args.command, args)
    rec = EXPERIMENTS[args.command](cfg)
    _emit({"experiment": rec.experiment, "version": rec.version, "runtime_s": rec.runtime_s, "output": cfg.output, "rows": rec.rows, "summary": rec.summary})


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="glasslab", description="Planted SK model laboratory")
    ap.add_argument("--version", action="version", version=f"glasslab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def point(p, with_c=True):
        p.add_argument("--theta", type=float, default=0.0)
        p.add_argument("--theta1", type=float, default=0.0)
        if with_c:
            p.add_argument("--c", type=float, default=0.0, help="clique fraction k/n")
        p.add_argument("--field", default="zero", help="zero | twopoint:a | gauss:s")

    s = sub.add_parser("simulate", help="draw a batch of observations")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    point(s, with_c=False)
    s.add_argument("--coupling", default="gaussian", choices=["gaussian", "rademacher", "uniform"])
    s.add_argument("--clique", help="comma-separated 0-based indices (default 0..k-1)")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--burn-in", type=int, default=50)
    s.add_argument("--thin", type=int, default=1)
    s.add_argument("--init", default="uniform", choices=["uniform", "plus", "minus"])
    s.add_argument("--shared-disorder", action="store_true")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--output", help=f"output directory (default ${OUTPUT_ENV} or .)")
    s.add_argument("--file", help="explicit batch path")
    s.add_argument("--csv", action="store_true", help="also write a CSV export")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("meanfield", help="solve the mean-field equations")
    point(s)
    s.set_defaults(func=cmd_meanfield)

    s = sub.add_parser("variance", help="limiting variances at a parameter point")
    point(s)
    s.set_defaults(func=cmd_variance)

    s = sub.add_parser("test", help="run a detection test on a batch file")
    s.add_argument("--input", required=True)
    s.add_argument("--regime", default="auto", choices=["auto", "high", "low", "critical", "large"])
    s.add_argument("--delta", type=float, default=0.5)
    s.add_argument("--branch", choices=["auto", "scan", "global"])
    s.set_defaults(func=cmd_test)

    s = sub.add_parser("recover", help="recover the clique from a batch file")
    s.add_argument("--input", required=True)
    s.add_argument("--k", type=int)
    s.add_argument("--regime", default="auto", choices=["auto", "high", "low", "critical"])
    s.add_argument("--truth", help="comma-separated indices, or 'header' for the batch's own clique")
    s.set_defaults(func=cmd_recover)

    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=f"{name} experiment")
        s.add_argument("--config", help="ExperimentConfig JSON file")
        s.add_argument("--seed", type=int, required=True)
        s.add_argument("--output", help=f"output directory (default ${OUTPUT_ENV} or .)")
        for key in ("n", "k", "theta", "theta1", "field", "coupling"):
            s.add_argument(f"--{key}", help="comma-separated grid values")
        s.add_argument("--m-schedule", dest="m_schedule", choices=["k_log_n", "log_n", "critical", "constant"])
        s.add_argument("--m-constant", dest="m_constant", type=float)
        s.add_argument("--m-scale", dest="m_scale", type=float)
        s.add_argument("--replications", type=int)
        s.add_argument("--draws", type=int)
        s.add_argument("--delta", type=float)
        s.add_argument("--regime", choices=["auto", "high", "low", "critical", "large"])
        s.add_argument("--placements", type=int)
        s.add_argument("--burn-in", dest="burn_in", type=int)
        s.add_argument("--recovery", action="store_true", help="also score exact recovery (power-curve)")
        s.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, RuntimeError) as exc:
        print(f"glasslab: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
