# -*- coding: utf-8 -*-
import csv
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol

from .schemas import METRICS_CSV_HEADER, MetricRow, RunRecord, RunSummary


class BaseSink(Protocol):
    def start_run(self, name: str, seed: int, config: Dict[str, Any]) -> None:
        """Initialize sink resources for a training run."""

    def emit_metrics(self, row: MetricRow) -> None:
        """Handle one evaluation row as soon as it is measured."""

    def emit_checkpoint(self, tag: str, path: Path) -> None:
        """Note a checkpoint written during the run ("grok" or "final")."""

    def finalize(self, record: RunRecord) -> Optional[RunSummary]:
        """Flush and optionally return the run summary."""


class RunDirectorySink(BaseSink):
    """
    Writes config.json at start, streams metrics.csv rows, and writes
    summary.json on finalize.
    """

    def __init__(self, run_dir: Path, indent: Optional[int] = 2):
        self.run_dir = Path(run_dir)
        self._indent = indent
        self._fh = None
        self._writer = None

    @property
    def metrics_path(self) -> Path:
        return self.run_dir / "metrics.csv"

    @property
    def summary_path(self) -> Path:
        return self.run_dir / "summary.json"

    @property
    def config_path(self) -> Path:
        return self.run_dir / "config.json"

    def start_run(self, name: str, seed: int, config: Dict[str, Any]) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.config_path.write_text(json.dumps(config, indent=self._indent, ensure_ascii=False) + "\n", encoding="utf-8")
        self._fh = self.metrics_path.open("w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(METRICS_CSV_HEADER)
        self._fh.flush()

    def emit_metrics(self, row: MetricRow) -> None:
        # repr-exact floats so identical runs give identical bytes
        self._writer.writerow([getattr(row, col) for col in METRICS_CSV_HEADER])
        self._fh.flush()

    def emit_checkpoint(self, tag: str, path: Path) -> None:
        return None

    def finalize(self, record: RunRecord) -> Optional[RunSummary]:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        summary = RunSummary.from_record(record)
        self.summary_path.write_text(
            json.dumps(json.loads(summary.json()), indent=self._indent, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        return summary


class ProgressSink(BaseSink):
    """Console progress, one line per evaluation (the verbose mode)."""

    def __init__(self, prefix: str = ""):
        self._prefix = prefix

    def start_run(self, name: str, seed: int, config: Dict[str, Any]) -> None:
        print(f"{self._prefix}start run={name} seed={seed}", flush=True)

    def emit_metrics(self, row: MetricRow) -> None:
        print(
            f"{self._prefix}epoch={row.epoch} train_loss={row.train_loss:.4f} test_loss={row.test_loss:.4f} "
            f"train_acc={row.train_acc:.4f} test_acc={row.test_acc:.4f} "
            f"res_norm={row.res_norm:.4f} max_logit={row.max_logit:.3f}",
            flush=True,
        )

    def emit_checkpoint(self, tag: str, path: Path) -> None:
        print(f"{self._prefix}checkpoint {tag} -> {path}", flush=True)

    def finalize(self, record: RunRecord) -> Optional[RunSummary]:
        return None


class CompositeSink(BaseSink):
    def __init__(self, sinks: List[BaseSink]):
        self._sinks = list(sinks)

    def start_run(self, name: str, seed: int, config: Dict[str, Any]) -> None:
        for s in self._sinks:
            s.start_run(name, seed, config)

    def emit_metrics(self, row: MetricRow) -> None:
        for s in self._sinks:
            s.emit_metrics(row)

    def emit_checkpoint(self, tag: str, path: Path) -> None:
        for s in self._sinks:
            s.emit_checkpoint(tag, path)

    def finalize(self, record: RunRecord) -> Optional[RunSummary]:
        summary = None
        for s in self._sinks:
            out = s.finalize(record)
            summary = summary or out
        return summary
