# -*- coding: utf-8 -*-
"""
Multi-seed sweeps.

Each seed trains into <out>/seed-<n>/ (same layout as a single run). The
aggregate is computed from the summary.json files on disk, so a sweep can be
re-aggregated after the fact with aggregate_directory().
"""
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from grok_lab.schemas import ExperimentConfig, RunSummary, SeedOutcome, SweepAggregate
from grok_lab.training import run_experiment
from grok_lab.utils import canonical_json, parse_iso_z, to_iso_z


def seed_dir(out_dir: Path, seed: int) -> Path:
    return Path(out_dir) / f"seed-{seed}"


def _run_seed(job: Tuple[str, int, str, Optional[int], bool]) -> SeedOutcome:
    # top-level so ProcessPoolExecutor can pickle it
    experiment_json, seed, run_dir, indent, verbose = job
    experiment = ExperimentConfig.parse_raw(experiment_json).for_seed(seed)
    try:
        run_experiment(experiment, Path(run_dir), indent=indent, verbose=verbose, progress_prefix=f"[seed {seed}] ")
    except Exception as exc:
        return SeedOutcome(seed=seed, run_dir=run_dir, error=f"{type(exc).__name__}: {exc}")
    return SeedOutcome(seed=seed, run_dir=run_dir)


def load_summary(run_dir: Path) -> Optional[RunSummary]:
    path = Path(run_dir) / "summary.json"
    if not path.exists():
        return None
    return RunSummary.parse_file(path)


def aggregate_summaries(name: str, comment: str, outcomes: Sequence[SeedOutcome]) -> SweepAggregate:
    """
    Statistics over the grok epochs of seeds that grokked (population std).
    failures counts finished runs that never grokked; errors counts seeds
    without a summary.
    """
    per_seed: List[SeedOutcome] = []
    summaries: List[RunSummary] = []
    for outcome in sorted(outcomes, key=lambda o: o.seed):
        summary = None if outcome.error else load_summary(Path(outcome.run_dir))
        if summary is None:
            per_seed.append(outcome.copy(update={"error": outcome.error or "summary.json missing"}))
            continue
        summaries.append(summary)
        per_seed.append(
            outcome.copy(
                update={
                    "grok_epoch": summary.grok_epoch,
                    "peak_test_acc": summary.peak_test_acc,
                    "diverged": summary.diverged,
                }
            )
        )

    groks = np.asarray([s.grok_epoch for s in summaries if s.grok_epoch is not None], dtype=np.float64)
    peaks = np.asarray([s.peak_test_acc for s in summaries], dtype=np.float64)
    starts = [parse_iso_z(s.started_at) for s in summaries if s.started_at]
    ends = [parse_iso_z(s.finished_at) for s in summaries if s.finished_at]

    return SweepAggregate(
        name=name,
        comment=comment,
        seeds=[o.seed for o in per_seed],
        n_runs=len(per_seed),
        failures=len(summaries) - len(groks),
        errors=len(per_seed) - len(summaries),
        mean_grok_epoch=float(groks.mean()) if len(groks) else None,
        std_grok_epoch=float(groks.std()) if len(groks) else None,
        min_grok_epoch=int(groks.min()) if len(groks) else None,
        max_grok_epoch=int(groks.max()) if len(groks) else None,
        mean_peak_acc=float(peaks.mean()) if len(peaks) else None,
        max_peak_acc=float(peaks.max()) if len(peaks) else None,
        success_count=int((peaks >= 1.0).sum()),
        started_at=to_iso_z(min(starts)) if starts else None,
        finished_at=to_iso_z(max(ends)) if ends else None,
        per_seed=per_seed,
    )


def _fmt(value, spec: str = "") -> str:
    if value is None:
        return "n/a"
    return format(value, spec)


def render_markdown(agg: SweepAggregate) -> str:
    lines = [f"# {agg.name}", ""]
    if agg.comment:
        lines += [agg.comment, ""]
    finished = agg.n_runs - agg.errors
    lines += [
        "| metric | value |",
        "|---|---|",
        f"| runs | {agg.n_runs} |",
        f"| grok epoch (mean +/- std) | {_fmt(agg.mean_grok_epoch, '.0f')} +/- {_fmt(agg.std_grok_epoch, '.0f')} |",
        f"| grok epoch range | {_fmt(agg.min_grok_epoch)} .. {_fmt(agg.max_grok_epoch)} |",
        f"| failures | {agg.failures}/{finished} |",
        f"| errors | {agg.errors} |",
        f"| 100% test accuracy | {agg.success_count}/{finished} |",
        f"| peak test accuracy (mean / max) | {_fmt(agg.mean_peak_acc, '.4f')} / {_fmt(agg.max_peak_acc, '.4f')} |",
        "",
        "## Per seed",
        "",
        "| seed | grok_epoch | peak_test_acc | diverged | error |",
        "|---|---|---|---|---|",
    ]
    for o in agg.per_seed:
        lines.append(
            f"| {o.seed} | {_fmt(o.grok_epoch)} | {_fmt(o.peak_test_acc, '.4f')} | {o.diverged} | {o.error or ''} |"
        )
    return "\n".join(lines) + "\n"


def write_aggregate(agg: SweepAggregate, out_dir: Path, indent: Optional[int] = 2) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "aggregate.json"
    md_path = out_dir / "aggregate.md"
    json_path.write_text(json.dumps(json.loads(agg.json()), indent=indent, ensure_ascii=False) + "\n", encoding="utf-8")
    md_path.write_text(render_markdown(agg), encoding="utf-8")
    return json_path, md_path


def config_matches(run_dir: Path, experiment: ExperimentConfig) -> bool:
    """True when run_dir/config.json echoes `experiment` (key order and whitespace ignored)."""
    path = Path(run_dir) / "config.json"
    with open(path, "r", encoding="utf-8") as f:
        echo = json.load(f)
    return canonical_json(echo) == canonical_json(experiment)


def aggregate_directory(out_dir: Path, experiment: ExperimentConfig, seeds: Sequence[int]) -> SweepAggregate:
    """
    Re-aggregate existing seed directories. A seed whose config.json was
    written by a different experiment counts as an error, not a result.
    """
    outcomes = []
    for s in seeds:
        run_dir = seed_dir(out_dir, s)
        outcome = SeedOutcome(seed=s, run_dir=str(run_dir))
        if (run_dir / "config.json").exists() and not config_matches(run_dir, experiment.for_seed(s)):
            outcome = outcome.copy(update={"error": "config.json does not match the experiment"})
        outcomes.append(outcome)
    return aggregate_summaries(experiment.name, experiment.comment, outcomes)


def run_sweep(
    experiment: ExperimentConfig,
    out_dir: Path,
    seeds: Optional[Sequence[int]] = None,
    jobs: int = 1,
    indent: Optional[int] = 2,
    verbose: bool = False,
) -> SweepAggregate:
    """
    Train every seed (in parallel when jobs > 1), then write aggregate.json
    and aggregate.md next to the seed directories. A seed that raises is
    recorded with its error; the others still run.
    """
    seeds = list(seeds if seeds is not None else experiment.seeds)
    if not seeds:
        raise ValueError("sweep needs at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ValueError(f"duplicate seeds in {seeds}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    payload = experiment.json()
    work = [(payload, s, str(seed_dir(out_dir, s)), indent, verbose) for s in seeds]

    if verbose:
        print(f"==== Sweep {experiment.name} ====")
        print(f"seeds={seeds} jobs={jobs} out={out_dir}")

    if jobs <= 1:
        outcomes = [_run_seed(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_seed, work))

    agg = aggregate_summaries(experiment.name, experiment.comment, outcomes)
    json_path, md_path = write_aggregate(agg, out_dir, indent=indent)

    if verbose:
        print("---- Summary ----")
        print(
            f"runs={agg.n_runs} failures={agg.failures} errors={agg.errors} "
            f"mean_grok_epoch={_fmt(agg.mean_grok_epoch, '.0f')} std={_fmt(agg.std_grok_epoch, '.0f')}"
        )
        print(f"Wrote {json_path}")
        print(f"Wrote {md_path}")
    return agg
