# -*- coding: utf-8 -*-
"""
Accuracy charts as standalone SVG.

The overlays draw one labeled test-accuracy polyline per run, over the full
training horizon and over an early window (first 5,000 epochs by default).
Each run also gets its own chart with train (dashed) and test (solid)
accuracy, which shows the gap between memorization and generalization. Coordinates are formatted with fixed
precision so identical inputs give identical bytes.
"""
import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence
from xml.sax.saxutils import escape

EARLY_WINDOW = 5000
WIDTH = 720
HEIGHT = 420
MARGIN_LEFT = 60
MARGIN_RIGHT = 170
MARGIN_TOP = 40
MARGIN_BOTTOM = 50
PALETTE = [
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
    "#bcbd22",
    "#17becf",
]


@dataclass
class Curve:
    label: str
    epochs: List[int]
    values: List[float]
    color: str
    dashed: bool = False


@dataclass
class Series:
    label: str
    epochs: List[int]
    train_acc: List[float]
    test_acc: List[float]


class SVG:
    def __init__(self):
        self.svg = ""

    def header(self, width: int, height: int) -> None:
        self.svg += (
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
            f'<svg version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" '
            'xmlns="http://www.w3.org/2000/svg">\n'
        )

    def filled_rectangle(self, x1: float, y1: float, x2: float, y2: float, fill: str, extra: str = "") -> None:
        self.svg += (
            f'<rect x="{x1:.1f}" y="{y1:.1f}" width="{x2 - x1:.1f}" height="{y2 - y1:.1f}" fill="{fill}" {extra}/>\n'
        )

    def line(self, x1: float, y1: float, x2: float, y2: float, stroke: str = "#000", extra: str = "") -> None:
        self.svg += f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" stroke="{stroke}" {extra}/>\n'

    def polyline(self, points: Sequence[tuple], stroke: str, title: str, extra: str = "") -> None:
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        self.svg += (
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="1.5" {extra}>'
            f"<title>{escape(title)}</title></polyline>\n"
        )

    def text(self, x: float, y: float, string: str, extra: str = "") -> None:
        self.svg += f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" font-size="12" {extra}>{escape(string)}</text>\n'

    def get_svg(self) -> str:
        return f"{self.svg}</svg>\n"


def _run_label(run_dir: Path) -> str:
    if run_dir.name.startswith("seed-") and run_dir.parent.name:
        return f"{run_dir.parent.name}/{run_dir.name}"
    return run_dir.name


def read_metrics(run_dir: Path) -> Optional[Series]:
    """Load metrics.csv from a run directory; warns and returns None when empty or missing."""
    run_dir = Path(run_dir)
    path = run_dir / "metrics.csv"
    if not path.exists():
        warnings.warn(f"{run_dir}: no metrics.csv, skipped", UserWarning)
        return None
    epochs, train_acc, test_acc = [], [], []
    with path.open("r", encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            epochs.append(int(row["epoch"]))
            train_acc.append(float(row["train_acc"]))
            test_acc.append(float(row["test_acc"]))
    if not epochs:
        warnings.warn(f"{run_dir}: metrics.csv has no rows, skipped", UserWarning)
        return None
    return Series(_run_label(run_dir), epochs, train_acc, test_acc)


def _nice_max(value: int) -> int:
    if value <= 0:
        return 1
    step = 10 ** max(0, len(str(value)) - 2)
    return ((value + step - 1) // step) * step


def _render_chart(curves: Sequence[Curve], title: str, x_max: int, y_label: str) -> str:
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    x0, y0 = MARGIN_LEFT, MARGIN_TOP + plot_h

    def sx(epoch: float) -> float:
        return x0 + plot_w * epoch / x_max

    def sy(acc: float) -> float:
        return y0 - plot_h * acc

    svg = SVG()
    svg.header(WIDTH, HEIGHT)
    svg.filled_rectangle(0, 0, WIDTH, HEIGHT, "#ffffff")
    svg.text(WIDTH / 2, MARGIN_TOP / 2 + 4, title, 'text-anchor="middle" font-weight="bold"')

    # axes and ticks
    svg.line(x0, y0, x0 + plot_w, y0)
    svg.line(x0, y0, x0, MARGIN_TOP)
    for i in range(6):
        epoch = x_max * i // 5
        x = sx(epoch)
        svg.line(x, y0, x, y0 + 5)
        svg.text(x, y0 + 18, str(epoch), 'text-anchor="middle"')
    for i in range(5):
        acc = i / 4
        y = sy(acc)
        svg.line(x0 - 5, y, x0, y)
        svg.line(x0, y, x0 + plot_w, y, "#dddddd")
        svg.text(x0 - 8, y + 4, f"{acc:.2f}", 'text-anchor="end"')
    svg.text(x0 + plot_w / 2, HEIGHT - 12, "epoch", 'text-anchor="middle"')
    svg.text(16, MARGIN_TOP + plot_h / 2, y_label, f'text-anchor="middle" transform="rotate(-90 16 {MARGIN_TOP + plot_h / 2:.2f})"')

    for i, c in enumerate(curves):
        dash = 'stroke-dasharray="6 3"' if c.dashed else ""
        points = [(sx(e), sy(a)) for e, a in zip(c.epochs, c.values) if e <= x_max]
        if points:
            svg.polyline(points, c.color, c.label, dash)
        # legend
        ly = MARGIN_TOP + 14 + 18 * i
        lx = x0 + plot_w + 12
        svg.line(lx, ly - 4, lx + 20, ly - 4, c.color, f'stroke-width="2" {dash}')
        svg.text(lx + 26, ly, c.label)
    return svg.get_svg()


def render_accuracy_chart(series: Sequence[Series], title: str, x_max: int) -> str:
    curves = [Curve(s.label, s.epochs, s.test_acc, PALETTE[i % len(PALETTE)]) for i, s in enumerate(series)]
    return _render_chart(curves, title, x_max, "test accuracy")


def render_run_chart(series: Series, x_max: int) -> str:
    curves = [
        Curve("train", series.epochs, series.train_acc, PALETTE[0], dashed=True),
        Curve("test", series.epochs, series.test_acc, PALETTE[1]),
    ]
    return _render_chart(curves, f"{series.label}: train vs test accuracy", x_max, "accuracy")


def run_chart_name(series: Series) -> str:
    return f"accuracy_{series.label.replace('/', '_')}.svg"


def write_combined_csv(series: Sequence[Series], path: Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["run", "epoch", "train_acc", "test_acc"])
        for s in series:
            for e, tr, te in zip(s.epochs, s.train_acc, s.test_acc):
                writer.writerow([s.label, e, tr, te])
    return path


def write_plots(run_dirs: Sequence[Path], out_dir: Path, early_window: int = EARLY_WINDOW) -> List[Path]:
    """
    Write test_accuracy_full.svg, test_accuracy_early.svg, combined.csv and
    one accuracy_<run>.svg per run, in that order. Runs without metrics are
    skipped; ValueError if nothing is left.
    """
    series = [s for s in (read_metrics(Path(d)) for d in run_dirs) if s is not None]
    if not series:
        raise ValueError("no run directory had metrics to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    full_max = _nice_max(max(max(s.epochs) for s in series))
    full = out_dir / "test_accuracy_full.svg"
    full.write_text(render_accuracy_chart(series, "Test accuracy", full_max), encoding="utf-8")
    early = out_dir / "test_accuracy_early.svg"
    early.write_text(
        render_accuracy_chart(series, f"Test accuracy, first {early_window} epochs", early_window),
        encoding="utf-8",
    )
    combined = write_combined_csv(series, out_dir / "combined.csv")

    per_run = []
    for s in series:
        path = out_dir / run_chart_name(s)
        path.write_text(render_run_chart(s, _nice_max(max(s.epochs))), encoding="utf-8")
        per_run.append(path)
    return [full, early, combined, *per_run]
