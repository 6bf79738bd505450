import json
import sys
import tempfile
import unittest
from pathlib import Path
from unittest import mock

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from grok_lab import training
from grok_lab.schemas import ExperimentConfig, RunSummary, SeedOutcome, SweepAggregate
from grok_lab.sweep import (
    aggregate_directory,
    aggregate_summaries,
    config_matches,
    render_markdown,
    run_sweep,
    seed_dir,
)


def toy_experiment(seeds) -> ExperimentConfig:
    return ExperimentConfig(
        name="toy-sweep",
        comment="toy",
        task={"kind": "mod_add", "p": 5},
        model={"d_model": 8, "n_heads": 2, "d_head": 4, "d_mlp": 16},
        train={"learning_rate": 1e-2, "max_epochs": 10, "eval_every": 5, "precision": "float64"},
        seeds=seeds,
    )


def write_summary(run_dir: Path, seed: int, grok_epoch, peak: float, started: str, finished: str) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    summary = RunSummary(
        name="s",
        seed=seed,
        config={},
        grok_epoch=grok_epoch,
        peak_test_acc=peak,
        started_at=started,
        finished_at=finished,
    )
    (run_dir / "summary.json").write_text(summary.json(), encoding="utf-8")


class TestAggregate(unittest.TestCase):
    def test_statistics_over_successful_seeds(self):
        with tempfile.TemporaryDirectory() as td:
            out = Path(td)
            write_summary(seed_dir(out, 0), 0, 100, 1.0, "2024-01-01T00:00:05.000000Z", "2024-01-01T01:00:00.000000Z")
            write_summary(seed_dir(out, 1), 1, 300, 1.0, "2024-01-01T00:00:00.000000Z", "2024-01-01T02:00:00.000000Z")
            write_summary(seed_dir(out, 2), 2, None, 0.4, "2024-01-01T00:00:01.000000Z", "2024-01-01T00:30:00.000000Z")
            outcomes = [SeedOutcome(seed=s, run_dir=str(seed_dir(out, s))) for s in (2, 0, 1)]
            outcomes.append(SeedOutcome(seed=3, run_dir=str(seed_dir(out, 3)), error="RuntimeError: boom"))
            agg = aggregate_summaries("x", "", outcomes)

        self.assertEqual(agg.seeds, [0, 1, 2, 3])
        self.assertEqual((agg.n_runs, agg.failures, agg.errors), (4, 1, 1))
        self.assertEqual(agg.mean_grok_epoch, 200.0)
        self.assertEqual(agg.std_grok_epoch, 100.0)
        self.assertEqual((agg.min_grok_epoch, agg.max_grok_epoch), (100, 300))
        self.assertEqual(agg.success_count, 2)
        self.assertAlmostEqual(agg.mean_peak_acc, 0.8)
        self.assertEqual(agg.max_peak_acc, 1.0)
        self.assertEqual(agg.started_at, "2024-01-01T00:00:00.000000Z")
        self.assertEqual(agg.finished_at, "2024-01-01T02:00:00.000000Z")
        self.assertEqual(agg.per_seed[3].error, "RuntimeError: boom")
        self.assertIsNone(agg.per_seed[2].grok_epoch)

    def test_single_seed_std_zero(self):
        with tempfile.TemporaryDirectory() as td:
            write_summary(seed_dir(Path(td), 0), 0, 700, 1.0, "2024-01-01T00:00:00Z", "2024-01-01T00:00:01Z")
            agg = aggregate_summaries("x", "", [SeedOutcome(seed=0, run_dir=str(seed_dir(Path(td), 0)))])
        self.assertEqual(agg.std_grok_epoch, 0.0)
        self.assertEqual(agg.mean_grok_epoch, 700.0)

    def test_no_grok_anywhere(self):
        with tempfile.TemporaryDirectory() as td:
            write_summary(seed_dir(Path(td), 0), 0, None, 0.2, "2024-01-01T00:00:00Z", "2024-01-01T00:00:01Z")
            agg = aggregate_summaries("x", "", [SeedOutcome(seed=0, run_dir=str(seed_dir(Path(td), 0)))])
        self.assertIsNone(agg.mean_grok_epoch)
        self.assertEqual(agg.failures, 1)
        self.assertIn("n/a", render_markdown(agg))

    def test_missing_summary_counts_as_error(self):
        with tempfile.TemporaryDirectory() as td:
            agg = aggregate_summaries("x", "", [SeedOutcome(seed=0, run_dir=td)])
        self.assertEqual(agg.errors, 1)
        self.assertEqual(agg.per_seed[0].error, "summary.json missing")


class TestRunSweep(unittest.TestCase):
    def setUp(self) -> None:
        self._td = tempfile.TemporaryDirectory()
        self.out = Path(self._td.name) / "sweep"

    def tearDown(self) -> None:
        self._td.cleanup()

    def test_sweep_writes_seed_dirs_and_aggregate(self):
        exp = toy_experiment([0, 1])
        agg = run_sweep(exp, self.out)
        for s in (0, 1):
            self.assertTrue((seed_dir(self.out, s) / "summary.json").exists())
        on_disk = SweepAggregate.parse_file(self.out / "aggregate.json")
        self.assertEqual(on_disk, agg)
        # recomputing from the per-seed summaries reproduces the emitted aggregate
        self.assertEqual(aggregate_directory(self.out, exp, [0, 1]), on_disk)
        md = (self.out / "aggregate.md").read_text(encoding="utf-8")
        self.assertIn("# toy-sweep", md)
        self.assertIn("| seed |", md)

    def test_each_seed_gets_its_own_split(self):
        run_sweep(toy_experiment([0, 1]), self.out)
        cfg0 = json.loads((seed_dir(self.out, 0) / "config.json").read_text(encoding="utf-8"))
        cfg1 = json.loads((seed_dir(self.out, 1) / "config.json").read_text(encoding="utf-8"))
        self.assertEqual((cfg0["task"]["split_seed"], cfg0["model"]["init_seed"], cfg0["train"]["train_seed"]), (0, 0, 0))
        self.assertEqual((cfg1["task"]["split_seed"], cfg1["model"]["init_seed"], cfg1["train"]["train_seed"]), (1, 1, 1))

    def test_parallel_matches_serial(self):
        exp = toy_experiment([0, 1])
        serial = run_sweep(exp, self.out / "serial", jobs=1)
        parallel = run_sweep(exp, self.out / "parallel", jobs=2)
        for s in (0, 1):
            a = (seed_dir(self.out / "serial", s) / "metrics.csv").read_bytes()
            b = (seed_dir(self.out / "parallel", s) / "metrics.csv").read_bytes()
            self.assertEqual(a, b)
        self.assertEqual(serial.mean_grok_epoch, parallel.mean_grok_epoch)

    def test_failed_seed_is_reported_and_others_finish(self):
        real = training.run_experiment

        def flaky(experiment, run_dir, **kw):
            if experiment.seeds == [1]:
                raise RuntimeError("simulated crash")
            return real(experiment, run_dir, **kw)

        with mock.patch("grok_lab.sweep.run_experiment", side_effect=flaky):
            agg = run_sweep(toy_experiment([0, 1]), self.out)
        self.assertEqual(agg.errors, 1)
        self.assertEqual(agg.per_seed[1].error, "RuntimeError: simulated crash")
        self.assertIsNone(agg.per_seed[0].error)
        self.assertTrue((self.out / "aggregate.json").exists())

    def test_reaggregation_flags_foreign_seed_dirs(self):
        exp = toy_experiment([0, 1])
        run_sweep(exp, self.out)
        other = exp.copy(update={"train": exp.train.copy(update={"learning_rate": 0.5})})
        agg = aggregate_directory(self.out, other, [0, 1])
        self.assertEqual(agg.errors, 2)
        self.assertEqual(agg.per_seed[0].error, "config.json does not match the experiment")

    def test_config_echo_comparison_ignores_layout(self):
        exp = toy_experiment([0])
        run_sweep(exp, self.out)
        path = seed_dir(self.out, 0) / "config.json"
        echo = json.loads(path.read_text(encoding="utf-8"))
        reordered = dict(reversed(list(echo.items())))
        path.write_text(json.dumps(reordered), encoding="utf-8")
        self.assertTrue(config_matches(seed_dir(self.out, 0), exp.for_seed(0)))
        self.assertFalse(config_matches(seed_dir(self.out, 0), exp.for_seed(1)))

    def test_duplicate_seeds_rejected(self):
        with self.assertRaises(ValueError):
            run_sweep(toy_experiment([0, 0]), self.out)


if __name__ == "__main__":
    unittest.main()
