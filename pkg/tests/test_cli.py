import contextlib
import csv
import io
import json
import os
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path
from unittest import mock

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from grok_lab import cli
from grok_lab.errors import NonFiniteError
from grok_lab.schemas import ExperimentConfig, RunSummary, SpectralReport, SweepAggregate

ENV = os.environ.copy()
ENV["PYTHONPATH"] = str(ROOT / "src")
ENV.pop("GROK_LAB_RUNS_ROOT", None)
ENV.pop("GROK_LAB_CONFIG_ROOT", None)
CLI = [sys.executable, str(ROOT / "src" / "grok_lab" / "cli.py")]

TOY = {
    "name": "toy",
    "comment": "tiny modular addition",
    "task": {"kind": "mod_add", "p": 5},
    "model": {"d_model": 8, "n_heads": 2, "d_head": 4, "d_mlp": 16},
    "train": {"learning_rate": 0.01, "max_epochs": 10, "eval_every": 5},
    "seeds": [0],
}


class TestCLI(unittest.TestCase):
    def setUp(self) -> None:
        self._td = tempfile.TemporaryDirectory()
        self.tmp = Path(self._td.name)
        self.config = self.write_config(TOY)

    def tearDown(self) -> None:
        self._td.cleanup()

    def write_config(self, doc, name: str = "toy.json") -> str:
        path = self.tmp / name
        path.write_text(json.dumps(doc), encoding="utf-8")
        return str(path)

    def run_cli(self, *args):
        return subprocess.run(CLI + list(args), capture_output=True, text=True, env=ENV, cwd=self.tmp)

    def test_run_writes_run_directory(self):
        out = self.tmp / "run"
        result = self.run_cli("run", "--config", self.config, "--out", str(out))
        self.assertEqual(result.returncode, 0, result.stderr)
        self.assertIn("Wrote", result.stdout)
        for name in ("config.json", "metrics.csv", "summary.json", "final.ckpt"):
            self.assertTrue((out / name).exists(), name)
        echo = ExperimentConfig.parse_file(out / "config.json")
        self.assertEqual(echo.name, "toy")
        self.assertEqual(echo.train.precision, "float32")

    def test_refuses_existing_output_without_force(self):
        out = self.tmp / "run"
        self.assertEqual(self.run_cli("run", "--config", self.config, "--out", str(out)).returncode, 0)
        result = self.run_cli("run", "--config", self.config, "--out", str(out))
        self.assertEqual(result.returncode, 1)
        self.assertIn("--force", result.stderr)
        result = self.run_cli("run", "--config", self.config, "--out", str(out), "--force")
        self.assertEqual(result.returncode, 0, result.stderr)

    def test_zero_epochs_summary(self):
        doc = dict(TOY, train=dict(TOY["train"], max_epochs=0))
        out = self.tmp / "zero"
        result = self.run_cli("run", "--config", self.write_config(doc, "zero.json"), "--out", str(out))
        self.assertEqual(result.returncode, 0, result.stderr)
        summary = RunSummary.parse_file(out / "summary.json")
        self.assertEqual(summary.epochs_completed, 0)
        self.assertEqual(len((out / "metrics.csv").read_text(encoding="utf-8").splitlines()), 2)

    def test_f64_and_seed_override(self):
        out = self.tmp / "f64"
        result = self.run_cli("run", "--config", self.config, "--out", str(out), "--f64", "--seeds", "4,5")
        self.assertEqual(result.returncode, 0, result.stderr)
        echo = ExperimentConfig.parse_file(out / "config.json")
        self.assertEqual(echo.train.precision, "float64")
        self.assertEqual(echo.seeds, [4])
        self.assertEqual(echo.task.split_seed, 4)

    def test_invalid_config_reports_field_path(self):
        doc = dict(TOY, train=dict(TOY["train"], eval_every=0))
        result = self.run_cli("run", "--config", self.write_config(doc, "bad.json"), "--out", str(self.tmp / "bad"))
        self.assertEqual(result.returncode, 1)
        self.assertIn("train.eval_every", result.stderr)

    def test_unknown_preset(self):
        result = self.run_cli("run", "--config", "zp-no-such-preset", "--out", str(self.tmp / "x"))
        self.assertEqual(result.returncode, 1)
        self.assertIn("Supported:", result.stderr)

    def test_bad_seeds_flag(self):
        result = self.run_cli("run", "--config", self.config, "--seeds", "a,b")
        self.assertEqual(result.returncode, 1)

    def test_sweep(self):
        out = self.tmp / "sweep"
        result = self.run_cli("sweep", "--config", self.config, "--out", str(out), "--seeds", "0,1", "--jobs", "1")
        self.assertEqual(result.returncode, 0, result.stderr)
        agg = SweepAggregate.parse_file(out / "aggregate.json")
        self.assertEqual(agg.seeds, [0, 1])
        self.assertEqual(agg.n_runs, 2)
        self.assertTrue((out / "aggregate.md").exists())
        self.assertTrue((out / "seed-1" / "summary.json").exists())

    def test_analyze_flags_non_grokked_model(self):
        out = self.tmp / "run"
        self.assertEqual(self.run_cli("run", "--config", self.config, "--out", str(out)).returncode, 0)
        report_path = self.tmp / "report.json"
        spectrum = self.tmp / "spectrum.csv"
        result = self.run_cli(
            "analyze",
            "--config", self.config,
            "--checkpoint", str(out / "final.ckpt"),
            "--out", str(report_path),
            "--top-n", "2",
            "--spectrum-csv", str(spectrum),
        )
        self.assertEqual(result.returncode, 0, result.stderr)
        report = SpectralReport.parse_file(report_path)
        self.assertEqual(len(report.top_frequencies), 2)
        self.assertEqual(report.grokked, report.test_accuracy >= 0.99)
        if not report.grokked:
            self.assertIn("not grokked", result.stderr)
        self.assertTrue(spectrum.exists())

    def test_analyze_rejects_s5(self):
        doc = dict(TOY, task={"kind": "s5"})
        result = self.run_cli(
            "analyze", "--config", self.write_config(doc, "s5.json"), "--checkpoint", str(self.tmp / "any.ckpt")
        )
        self.assertEqual(result.returncode, 1)
        self.assertIn("mod_add", result.stderr)

    def test_analyze_missing_checkpoint(self):
        result = self.run_cli("analyze", "--config", self.config, "--checkpoint", str(self.tmp / "missing.ckpt"))
        self.assertEqual(result.returncode, 3)

    def test_plot(self):
        out = self.tmp / "run"
        self.assertEqual(self.run_cli("run", "--config", self.config, "--out", str(out)).returncode, 0)
        plots = self.tmp / "plots"
        result = self.run_cli("plot", str(out), "--out", str(plots))
        self.assertEqual(result.returncode, 0, result.stderr)
        for name in ("test_accuracy_full.svg", "test_accuracy_early.svg", "combined.csv", "accuracy_run.svg"):
            self.assertTrue((plots / name).exists(), name)

    def test_plot_without_metrics(self):
        result = self.run_cli("plot", str(self.tmp / "nothing"), "--out", str(self.tmp / "plots"))
        self.assertEqual(result.returncode, 1)

    def test_dump_dataset(self):
        path = self.tmp / "ds.csv"
        result = self.run_cli("dump-dataset", "--config", self.config, "--out", str(path))
        self.assertEqual(result.returncode, 0, result.stderr)
        with path.open(encoding="utf-8", newline="") as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(len(rows), 25)

    def test_divergence_exit_code(self):
        err = io.StringIO()
        with mock.patch("grok_lab.training.adamw_step", side_effect=NonFiniteError("adamw_step(mlp.W_in)")):
            with contextlib.redirect_stdout(io.StringIO()), contextlib.redirect_stderr(err):
                code = cli.main(["run", "--config", self.config, "--out", str(self.tmp / "div")])
        self.assertEqual(code, 2)
        self.assertIn("diverged", err.getvalue())
        self.assertTrue(RunSummary.parse_file(self.tmp / "div" / "summary.json").diverged)

    def test_missing_subcommand(self):
        with contextlib.redirect_stderr(io.StringIO()):
            self.assertEqual(cli.main([]), 1)


if __name__ == "__main__":
    unittest.main()
