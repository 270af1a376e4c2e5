"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime or numerical
failure, 3 a causal identity failed in ``verify-causal``.
"""

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from ..causal import verify_random_scms
from ..datasets import save_tabular
from ..errors import ConfigError, XermError
from ..model import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, dump_config, load_config
from .pipeline import (BALANCED, ablate_constant_w, atomic_write, evaluate_model,
                       feature_probe, load_data, run_xerm_pipeline, sweep_gamma,
                       train_xe, write_curve, write_table)
from .report import format_summary, report

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IDENTITY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_config_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="run a single seed")
    p.add_argument("--out", help="output directory")
    group = p.add_argument_group("experiment settings (override the config file)")
    for f in fields(ExperimentConfig):
        if f.name in ("out", "seeds"):
            continue
        group.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name,
                           metavar="VALUE")
    group.add_argument("--seeds", dest="cfg_seeds", metavar="LIST")


def _config(args):
    overrides = {k[4:]: v for k, v in vars(args).items()
                 if k.startswith("cfg_") and v is not None}
    if args.out:
        overrides["out"] = args.out
    config = load_config(args.config, overrides)
    if args.seed is not None:
        config = config.replace(seeds=[args.seed])
    return config


def _out(config):
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args):
    config = _config(args)
    out = _out(config)
    seed = config.seeds[0]
    data = load_data(config.replace(standardize=False), seed)
    ext = "csv" if config.data_format == "csv" else "f32"
    save_tabular(data.train, out / f"train.{ext}", config.data_format, config.csv_header)
    save_tabular(data.suites[BALANCED], out / f"test.{ext}", config.data_format,
                 config.csv_header)
    if data.probe_pool is not None:
        save_tabular(data.probe_pool, out / f"probe.{ext}", config.data_format,
                     config.csv_header)
    print(f"train counts {data.train.class_counts.tolist()} -> {out}")


def cmd_train_xe(args):
    config = _config(args)
    out = _out(config)
    for seed in config.seeds:
        params, curve = train_xe(config, seed, return_curve=True)
        atomic_write(out / f"xe_seed{seed}.ckpt", save_checkpoint(params))
        write_curve(out / f"loss_xe_seed{seed}.csv", curve)
        print(f"seed {seed}: final loss {curve[-1] if curve else float('nan'):.4f}")


def cmd_train_xerm(args):
    config = _config(args)
    out = _out(config)
    atomic_write(out / "config.txt", dump_config(config))
    for seed in config.seeds:
        m = run_xerm_pipeline(config, seed, out / f"seed_{seed}")
        accs = {model: round(by[BALANCED]["accuracy"], 4) for model, by in m.evaluations.items()}
        print(f"seed {seed}: balanced accuracy {accs}")


def cmd_eval(args):
    config = _config(args)
    out = _out(config)
    params = load_checkpoint(Path(args.checkpoint).read_bytes())
    results = {}
    for seed in config.seeds:
        data = load_data(config, seed)
        tau = config.tau if args.adjust else 0.0
        reports = evaluate_model(params.astype(np.dtype(config.dtype)), data, data.prior, tau)
        results[str(seed)] = {s: r.to_dict() for s, r in reports.items()}
        for s, r in reports.items():
            print(f"seed {seed} {s:12s} acc={r.accuracy:.4f} l1={r.l1_to_truth:.4f}")
    atomic_write(out / "eval.json", json.dumps(results, indent=2) + "\n")


def cmd_sweep_gamma(args):
    config = _config(args)
    rows = sweep_gamma(config)
    write_table(_out(config) / "sweep_gamma.csv", rows)
    for r in rows:
        print(f"seed {r['seed']} gamma {r['gamma']:g}: balanced {r['acc_balanced']:.4f}")


def cmd_ablate_w(args):
    config = _config(args)
    rows = ablate_constant_w(config)
    write_table(_out(config) / "ablate_w.csv", rows)
    for r in rows:
        print(f"seed {r['seed']} w {r['w']:g}: balanced {r['acc_balanced']:.4f}")


def cmd_probe(args):
    config = _config(args)
    out = _out(config)
    backbone = load_checkpoint(Path(args.checkpoint).read_bytes())
    results = {}
    for seed in config.seeds:
        data = load_data(config, seed)
        if data.probe_pool is None:
            raise ConfigError("probe needs a balanced training set (probe_path for tabular data)")
        rep = feature_probe(backbone.astype(np.dtype(config.dtype)), data.probe_pool, config,
                            data.suites[BALANCED], data.partition, seed)
        results[str(seed)] = rep.to_dict()
        print(f"seed {seed}: probe accuracy {rep.accuracy:.4f}")
    atomic_write(out / "probe.json", json.dumps(results, indent=2) + "\n")


def cmd_verify_causal(args):
    results = verify_random_scms(args.n, args.seed or 0)
    print(f"{'identity':20s} {'status':6s} worst")
    for name, (ok, worst) in results.items():
        label = "rate" if name == "negative_control" else "dev"
        print(f"{name:20s} {'PASS' if ok else 'FAIL':6s} {label}={worst:.3e}")
    return EXIT_OK if all(ok for ok, _ in results.values()) else EXIT_IDENTITY


def cmd_report(args):
    rows = report(args.manifests, args.out)
    print(format_summary(rows), end="")


def build_parser():
    parser = _Parser(prog="xermlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    simple = {
        "gen-data": (cmd_gen_data, "write the synthetic splits as tabular files"),
        "train-xe": (cmd_train_xe, "train the imbalanced cross-entropy model"),
        "train-xerm": (cmd_train_xerm, "full pipeline per seed, writes manifests"),
        "sweep-gamma": (cmd_sweep_gamma, "one cross-domain run per gamma"),
        "ablate-w": (cmd_ablate_w, "constant-weight distillation runs"),
    }
    for name, (fn, text) in simple.items():
        p = sub.add_parser(name, help=text)
        _add_config_flags(p)
        p.set_defaults(func=fn)
    p = sub.add_parser("eval", help="evaluate a checkpoint on every test suite")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--adjust", action="store_true", help="apply logit adjustment (PC)")
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("probe", help="retrain the head of a backbone on balanced data")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_probe)
    p = sub.add_parser("verify-causal", help="check the causal identities on random SCMs")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_verify_causal)
    p = sub.add_parser("report", help="aggregate manifests across seeds")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (XermError, ArithmeticError, OSError) as exc:
        if isinstance(getattr(exc, "cause", None), ConfigError):
            print(f"configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
