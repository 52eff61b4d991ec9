"""Command line entry point: ``cgrl {bench,train,ablate,sweep,verify,plot}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.out:
        cfg = cfg.with_(out=args.out)
    print(f"# config {cfg.hash()}", file=sys.stderr)
    sys.stderr.write("".join(f"#   {line}\n" for line in cfg.to_text().splitlines()))
    return cfg


def cmd_bench(args) -> int:
    from .experiment import get_benchmark
    from .shift import save_benchmark

    cfg = _config(args)
    bench = get_benchmark(cfg)
    out = save_benchmark(bench, Path(cfg.out))
    print(f"benchmark {bench.key} written to {out}")
    return 0


def _report_failures(records) -> int:
    failed = [r for r in records if r.failed]
    for r in failed:
        print(f"error: seed {r.seed} failed: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_train(args) -> int:
    from .experiment import run_experiment
    from .outputs import emit_outputs

    cfg = _config(args)
    records, agg = run_experiment(cfg, jobs=args.jobs, seed_offset=args.seed_offset)
    emit_outputs(records, cfg.out, cfg.mi_window)
    for k in sorted(agg.mean):
        print(f"{k:24s} {agg.mean[k]:.4f} +- {agg.std[k]:.4f}")
    return _report_failures(records)


def cmd_ablate(args) -> int:
    from .experiment import run_ablation
    from .outputs import emit_ablation

    cfg = _config(args)
    table = run_ablation(cfg, jobs=args.jobs, seed_offset=args.seed_offset)
    emit_ablation(table, cfg.out, Path(cfg.benchmark).name)
    for name, _, _, agg in table:
        m, s = agg.mean.get("ood_mean_acc", float("nan")), agg.std.get("ood_mean_acc", float("nan"))
        print(f"{name:12s} {m:.4f} +- {s:.4f}")
    return max(_report_failures(recs) for _, _, recs, _ in table)


def cmd_sweep(args) -> int:
    from .experiment import run_sensitivity
    from .outputs import emit_sweep

    cfg = _config(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {args.values!r}")
    if not values:
        raise ConfigError("--values is empty")
    table = run_sensitivity(cfg, args.axis, values, jobs=args.jobs, seed_offset=args.seed_offset)
    emit_sweep(table, args.axis, cfg.out)
    for v, _, _, agg in table:
        print(f"{args.axis}={v:<8g} {agg.mean.get('ood_mean_acc', float('nan')):.4f}")
    return max(_report_failures(recs) for _, _, recs, _ in table)


def cmd_verify(args) -> int:
    from .scm import run_verification

    report = run_verification(seed=args.seed_offset)
    text = report.text()
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verification.txt").write_text(text)
    return 0 if report.passed else 1


def cmd_plot(args) -> int:
    from .outputs import emit_outputs, load_records

    src = Path(args.records)
    files = sorted(src.glob("records_*.json")) if src.is_dir() else [src]
    if not files:
        raise FileNotFoundError(f"no records_*.json under {src}")
    out = args.out or (src if src.is_dir() else src.parent)
    for f in files:
        written = emit_outputs(load_records(f), out)
        print(f"{f.name}: {len(written)} files")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--out", help="output directory (overrides the config's out)")
    common.add_argument("--seed-offset", type=int, default=0, help="added to every run seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel runs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cgrl", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("bench", parents=[common], help="build and save a shift benchmark bundle")
    sub.add_parser("train", parents=[common], help="multi-seed training and evaluation")
    sub.add_parser("ablate", parents=[common], help="full model and single-loss-removed variants")
    sw = sub.add_parser("sweep", parents=[common], help="sensitivity sweep along one axis")
    sw.add_argument("--axis", required=True, choices=("K", "lambda1", "lambda2", "tau", "margin"))
    sw.add_argument("--values", required=True, help="comma-separated values")
    sub.add_parser("verify", parents=[common], help="numeric checks of the causal identities")
    pl = sub.add_parser("plot", parents=[common], help="re-emit files from saved records")
    pl.add_argument("records", help="a records_*.json file or a directory of them")
    return p


COMMANDS = {"bench": cmd_bench, "train": cmd_train, "ablate": cmd_ablate, "sweep": cmd_sweep,
            "verify": cmd_verify, "plot": cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
