"""Command-line interface."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config, profile_config
from .data_pipeline import ingest_csv, write_csv
from .errors import DecompensError
from .experiment_harness import (emit_report, evaluate_checkpoints, load_report, run_experiment,
                                 timing_profile, write_outputs)
from .noise_ensembles import NoiseConfig, decompose
from .synthetic import generate_synthetic

log = logging.getLogger("decompens")


def _add_experiment_flags(p):
    p.add_argument("--config", help="YAML/JSON experiment config (schema_version 1)")
    p.add_argument("--profile", choices=("quick", "paper"))
    p.add_argument("--data", help="input CSV (timestamp, flow[, site])")
    p.add_argument("--site", help="site id to select from a multi-site CSV")
    p.add_argument("--site-col", help="name of the site column")
    p.add_argument("--method", action="append",
                   help="method, or method+aggregation; repeatable")
    p.add_argument("--aggregation", action="append",
                   help="aggregation applied to every --method given without one")
    p.add_argument("--input-minutes", type=float)
    p.add_argument("--target-minutes", type=float)
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--leakage", choices=("faithful", "strict"))
    p.add_argument("--workers", type=int)


def build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else profile_config(args.profile or "quick")
    d = cfg.to_dict()
    if args.config and args.profile and args.profile != cfg.profile:
        d["profile"] = args.profile
    for flag, key in (("input_minutes", "input_minutes"), ("target_minutes", "target_minutes"),
                      ("repeats", "repeats"), ("seed", "seed"), ("leakage", "leakage"),
                      ("workers", "workers")):
        v = getattr(args, flag, None)
        if v is not None:
            d[key] = v
    if getattr(args, "repeats", None) is not None or getattr(args, "seed", None) is not None:
        d["seeds"] = None
    if getattr(args, "data", None):
        d["data"]["path"] = args.data
    if getattr(args, "site", None):
        d["data"]["site"] = args.site
    if getattr(args, "site_col", None):
        d["data"]["site_col"] = args.site_col
    if getattr(args, "method", None):
        aggs = args.aggregation or []
        pipelines = []
        for m in args.method:
            if "+" in m:
                pipelines.append(m)
            else:
                default = {"single": ["none"]}.get(m, ["linear"])
                pipelines.extend(f"{m}+{a}" for a in (aggs or default))
        d["pipelines"] = pipelines
    elif getattr(args, "aggregation", None):
        methods = list(dict.fromkeys(p["method"] for p in d["pipelines"]))
        d["pipelines"] = [f"{m}+{a}" for m in methods for a in args.aggregation]
    return ExperimentConfig.from_dict(d)


# --------------------------------------------------------------------------
# subcommands

def cmd_generate(args):
    cfg = build_config(args)
    series = generate_synthetic(cfg.synthetic, args.seed if args.seed is not None
                                else (cfg.synthetic.seed if cfg.synthetic.seed is not None
                                      else cfg.seed))
    write_csv(series, args.out, start_epoch=args.start_epoch)
    log.info("wrote %d samples to %s", len(series), args.out)
    return 0


def cmd_decompose(args):
    series = ingest_csv(args.input, site_col=args.site_col, site=args.site)
    values = series.values[args.start:None if args.length is None else args.start + args.length]
    cfg = load_config(args.config) if args.config else profile_config("quick")
    dc = cfg.decomposition
    noise = NoiseConfig(args.trials or dc.trials, args.epsilon or dc.epsilon, args.seed,
                        tuple(dc.schedule))
    d = decompose(values, args.method, noise, dc.sift())
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"imf_{m + 1}" for m in range(d.n_imfs)] + ["residue"])
        t0 = series.origin_index + args.start
        for i in range(values.size):
            w.writerow([t0 + i] + [repr(float(v)) for v in d.imfs[:, i]]
                       + [repr(float(d.residue[i]))])
    log.info("%s: %d IMFs over %d samples -> %s", d.method_tag, d.n_imfs, values.size, args.out)
    return 0


def cmd_train(args):
    cfg = build_config(args)
    report = run_experiment(cfg, out_dir=args.out, save_models=True)
    sys.stdout.write(emit_report(report, "text"))
    return 0


def cmd_evaluate(args):
    cfg = build_config(args)
    ckpt = Path(args.checkpoints or Path(args.out) / "checkpoints")
    report = evaluate_checkpoints(cfg, ckpt)
    write_outputs(report, args.out, cfg)
    sys.stdout.write(emit_report(report, "text"))
    return 0


def cmd_report(args):
    report = load_report(args.input)
    text = emit_report(report, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
    return 0


def cmd_profile(args):
    cfg = build_config(args)
    prof = timing_profile(cfg, runs=args.runs)
    text = json.dumps({"config_hash": cfg.hash(), "runs": args.runs, "unit": "minutes",
                       "median_stage_minutes": prof}, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def make_parser():
    parser = argparse.ArgumentParser(prog="decompens",
                                     description="Decomposition-based ensemble forecasting")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic flow CSV")
    _add_experiment_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--start-epoch", type=float, default=0.0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("decompose", help="dump the IMFs of a flow CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--config")
    p.add_argument("--method", choices=("EMD", "EEMD", "CEEMDAN", "emd", "eemd", "ceemdan"),
                   default="EMD")
    p.add_argument("--trials", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--length", type=int)
    p.add_argument("--site")
    p.add_argument("--site-col")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("train", help="run repeats, save checkpoints and reports")
    _add_experiment_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score saved checkpoints on the test split")
    _add_experiment_flags(p)
    p.add_argument("--checkpoints", help="defaults to OUT/checkpoints")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="re-render a JSON report")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("profile", help="median per-stage wall-clock per method")
    _add_experiment_flags(p)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DecompensError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
