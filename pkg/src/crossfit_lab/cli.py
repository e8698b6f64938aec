"""Command-line entry point: ``crossfit-lab <command> ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import dgp as dgp_mod
from .dependence import save_dataset
from .diagnostics import ep_suite
from .harness import ConfigError, demo_bias, demo_config, load_config, plot, run, summarize


def _size(text):
    if "x" in text.lower():
        a, b = text.lower().split("x", 1)
        return int(a), int(b)
    return int(text)


def cmd_simulate(args):
    size = _size(args.size)
    params = {}
    if args.edge_prob is not None:
        params["edge_prob"] = args.edge_prob
    if args.m is not None:
        params["m"] = args.m
    if args.dgp == "timeseries" and args.raw:
        ds = dgp_mod.gen_timeseries(int(size), seed=args.seed, **params)
    else:
        ds = dgp_mod.generate(args.dgp, size, args.seed, **params)
    csv_path, json_path = save_dataset(ds.table, ds.structure, args.out, args.stem)
    o = ds.oracle
    oracle = {"dgp": ds.dgp, "params": ds.params, "seed": args.seed, "psi": o.psi,
              "cm0": o.cm0, "m0": o.m0.tolist(), "m1": o.m1.tolist(), "g1": o.g1.tolist()}
    oracle_path = os.path.join(args.out, f"{args.stem}.oracle.json")
    with open(oracle_path, "w") as fh:
        json.dump(oracle, fh)
    print(f"wrote {csv_path}, {json_path}, {oracle_path}")


def cmd_run(args):
    cfg = load_config(args.config, seed=args.seed, workers=args.workers)
    path = run(cfg, output_dir=args.out)
    print(f"wrote {path}")


def cmd_summarize(args):
    path = summarize(args.results, args.out, truth=args.truth, estimand=args.estimand)
    print(f"wrote {path}")


def cmd_plot(args):
    for p in plot(args.summary, args.out):
        print(f"wrote {p}")


def cmd_diagnose_ep(args):
    cfg = load_config(args.config, seed=args.seed, workers=args.workers)
    scheme = cfg.schemes[0]
    if scheme.name in ("nocrossfit", "two_way"):
        raise ConfigError(f"schemes.0: diagnose-ep does not support scheme {scheme.name!r}")
    report = ep_suite(cfg.dgp, cfg.sizes, cfg.replicates, cfg.learner_spec("outcome"),
                      cfg.learner_spec("propensity"), scheme=scheme.name, n_oracle=cfg.n_oracle,
                      seed=cfg.seed, estimand=cfg.estimand, k=scheme.folds(), gap=scheme.gap,
                      outcome_mode=cfg.outcome_mode, dgp_params=cfg.dgp_params,
                      workers=cfg.workers)
    out = args.out or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    report.to_json(os.path.join(out, "ep_report.json"))
    report.write_csv(os.path.join(out, "ep_replicates.csv"))
    for s in report.summaries:
        print(f"n={s['size']}: mean EP {s['mean']:.4g} (SE {s['se_mean']:.3g}), "
              f"Var(sqrt(n) EP) {s['var_scaled']:.4g}")
    print(f"slope of log Var(EP) on log n: "
          f"{report.slope:.3f}" if report.slope_defined else "slope undefined")
    print(f"wrote {out}/ep_report.json and {out}/ep_replicates.csv")


def cmd_demo_bias(args):
    with open(args.config) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"<root>: invalid JSON ({exc})") from None
    cfg = demo_config(doc, seed=args.seed, workers=args.workers)
    for p in demo_bias(cfg, output_dir=args.out):
        print(f"wrote {p}")


def build_parser():
    p = argparse.ArgumentParser(prog="crossfit-lab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw one dataset and write CSV + structure/oracle JSON")
    s.add_argument("--dgp", required=True, choices=dgp_mod.DGP_KINDS + (
        "two_way_independent", "network_independent"))
    s.add_argument("--size", required=True, help="n, T, or NxM for two_way designs")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--edge-prob", type=float, default=None)
    s.add_argument("--m", type=int, default=None)
    s.add_argument("--raw", action="store_true", help="time series: keep L1..L3, no lags")
    s.add_argument("--out", default=".")
    s.add_argument("--stem", default="data")
    s.set_defaults(func=cmd_simulate)

    for name, func, helptext in (("run", cmd_run, "run a Monte Carlo experiment"),
                                 ("diagnose-ep", cmd_diagnose_ep, "empirical-process diagnostics"),
                                 ("demo-bias", cmd_demo_bias, "cross-fit vs no-cross-fit bias")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config")
        s.add_argument("--workers", type=int, default=None)
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--out", default=None)
        s.set_defaults(func=func)

    s = sub.add_parser("summarize", help="bias / SD / RMSE / coverage per scheme and size")
    s.add_argument("results")
    s.add_argument("--out", default=None)
    s.add_argument("--truth", type=float, default=None)
    s.add_argument("--estimand", default="ate", choices=("ate", "cm0", "cm1"))
    s.set_defaults(func=cmd_summarize)

    s = sub.add_parser("plot", help="SVG figures from a summary file")
    s.add_argument("summary")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
