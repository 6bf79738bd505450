# -*- coding: utf-8 -*-
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from grok_lab.analysis import build_spectral_report, effective_logit_map, write_spectrum_csv
from grok_lab.checkpoint import load_params
from grok_lab.config import (
    default_jobs,
    format_validation_error,
    get_runs_root,
    load_experiment,
    load_global,
    output_indent,
)
from grok_lab.config_loader import set_config_root_override
from grok_lab.errors import UnsupportedTaskError
from grok_lab.plotting import write_plots
from grok_lab.schemas import ExperimentConfig
from grok_lab.sweep import run_sweep, seed_dir
from grok_lab.tasks import build_dataset, dump_dataset_csv
from grok_lab.training import run_experiment

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2
EXIT_IO = 3

RUN_ARTIFACTS = ("config.json", "metrics.csv", "summary.json", "final.ckpt", "grok.ckpt")


def _parse_seeds(text: str) -> List[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got '{text}'")
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _experiment_from_args(args) -> ExperimentConfig:
    exp = load_experiment(args.config)
    doc = json.loads(exp.json())
    if getattr(args, "seeds", None):
        doc["seeds"] = args.seeds
    if getattr(args, "f64", False):
        doc["train"]["precision"] = "float64"
    # overrides go through the same validation as the file
    return ExperimentConfig.parse_obj(doc)


def _prepare_run_dir(run_dir: Path, force: bool) -> None:
    if run_dir.exists() and any(run_dir.iterdir()):
        if not force:
            raise ValueError(f"Output directory {run_dir} is not empty; pass --force to overwrite")
        # grok.ckpt from an older run must not survive a rerun that never groks
        for name in RUN_ARTIFACTS:
            (run_dir / name).unlink(missing_ok=True)


def cmd_run(args) -> int:
    cfg = load_global()
    exp = _experiment_from_args(args)
    run_dir = get_runs_root(exp, args.out)
    _prepare_run_dir(run_dir, args.force)
    summary = run_experiment(exp, run_dir, indent=output_indent(cfg), verbose=args.verbose)
    print(f"Wrote {run_dir / 'summary.json'}")
    if summary.diverged:
        print(f"Run diverged at epoch {summary.divergence_epoch}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_global()
    exp = _experiment_from_args(args)
    out_dir = get_runs_root(exp, args.out)
    for seed in exp.seeds:
        _prepare_run_dir(seed_dir(out_dir, seed), args.force)
    jobs = args.jobs if args.jobs is not None else default_jobs(cfg)
    agg = run_sweep(exp, out_dir, exp.seeds, jobs=jobs, indent=output_indent(cfg), verbose=args.verbose)
    for outcome in agg.per_seed:
        if outcome.error:
            print(f"seed {outcome.seed} failed: {outcome.error}", file=sys.stderr)
    print(f"Wrote {out_dir / 'aggregate.json'}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = load_global()
    exp = _experiment_from_args(args)
    exp = exp.for_seed(exp.seeds[0])
    if exp.task.kind != "mod_add":
        raise UnsupportedTaskError(f"analyze supports mod_add checkpoints only, config task is '{exp.task.kind}'")
    checkpoint = Path(args.checkpoint)
    params = load_params(checkpoint, exp.model)
    dataset = build_dataset(exp.task)
    report = build_spectral_report(params, exp.model, dataset, n=args.top_n, grok_threshold=exp.train.grok_threshold)

    out = Path(args.out) if args.out else checkpoint.parent / "spectral_report.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(json.loads(report.json()), indent=output_indent(cfg), ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"Wrote {out}")
    if args.spectrum_csv:
        print(f"Wrote {write_spectrum_csv(effective_logit_map(params, exp.model, dataset), args.spectrum_csv)}")

    if not report.grokked:
        print(
            f"Warning: model is not grokked (test accuracy {report.test_accuracy:.4f} < {report.grok_threshold})",
            file=sys.stderr,
        )
    if args.verbose:
        print("---- Summary ----")
        print("top frequencies: " + ", ".join(f"k={f.k} ({f.magnitude:.3f})" for f in report.top_frequencies))
        print(f"ablation_accuracy={report.ablation_accuracy:.4f} unablated_accuracy={report.unablated_accuracy:.4f}")
        for f in report.fve + [report.activation_frequency]:
            tag = "activation-dominant " if f is report.activation_frequency else ""
            print(
                f"{tag}fve k={f.k}: u={f.fve_u:.4f} v={f.fve_v:.4f} "
                f"neuron u={f.neuron_fve_u:.4f} v={f.neuron_fve_v:.4f}"
            )
    return EXIT_OK


def cmd_plot(args) -> int:
    written = write_plots([Path(d) for d in args.runs], Path(args.out))
    for path in written:
        print(f"Wrote {path}")
    return EXIT_OK


def cmd_dump_dataset(args) -> int:
    exp = _experiment_from_args(args)
    exp = exp.for_seed(exp.seeds[0])
    path = dump_dataset_csv(build_dataset(exp.task), Path(args.out))
    print(f"Wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config-root", type=Path, default=None, help="Optional override for configs root")
    common.add_argument("-v", "--verbose", action="store_true", help="Enable verbose console output")

    ap = argparse.ArgumentParser(prog="grok-lab", description="Grokking lab: train, sweep and analyze micro-transformers")
    sub = ap.add_subparsers(dest="command", required=True)

    def experiment_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="Experiment JSON file or preset name")
        p.add_argument("--seeds", type=_parse_seeds, default=None, help="Comma-separated seeds, overrides the config")
        p.add_argument("--f64", action="store_true", help="Train and evaluate in float64")

    p = sub.add_parser("run", parents=[common], help="Train one seed into a run directory")
    experiment_args(p)
    p.add_argument("--out", default=None, help="Run directory (default: output_dir, $GROK_LAB_RUNS_ROOT or ./runs)")
    p.add_argument("--force", action="store_true", help="Overwrite a non-empty run directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="Train every seed and aggregate the results")
    experiment_args(p)
    p.add_argument("--out", default=None, help="Sweep directory")
    p.add_argument("--jobs", type=int, default=None, help="Parallel worker processes (default: global.json sweep.jobs)")
    p.add_argument("--force", action="store_true", help="Overwrite non-empty seed directories")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", parents=[common], help="Spectral report for a modular-addition checkpoint")
    experiment_args(p)
    p.add_argument("--checkpoint", required=True, help="Checkpoint file (final.ckpt or grok.ckpt)")
    p.add_argument("--out", default=None, help="Report JSON path (default: next to the checkpoint)")
    p.add_argument("--top-n", type=int, default=5, help="Number of dominant frequencies")
    p.add_argument("--spectrum-csv", default=None, help="Also write the per-frequency energy spectrum")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plot", parents=[common], help="Accuracy SVG charts (overlays and per-run train vs test) for run directories")
    p.add_argument("runs", nargs="+", help="Run directories containing metrics.csv")
    p.add_argument("--out", default="plots", help="Output directory")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("dump-dataset", parents=[common], help="Write the task dataset with its split as CSV")
    experiment_args(p)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_dump_dataset)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    if args.config_root is not None:
        set_config_root_override(args.config_root)

    try:
        return args.func(args)
    except ValidationError as exc:
        print("Invalid configuration:", file=sys.stderr)
        for line in format_validation_error(exc):
            print(f"  {line}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"Diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
