"""Sweep report output: CSV rows, rendered class maps, and accuracy figures.

The CSV is written incrementally (one flushed line per completed row) so a
failed run still leaves partial results behind.  Figures summarize the sweep
the way the result tables do: overall accuracy and kappa against sigma_t per
image and mode, and mean per-class accuracy per mode.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .raster import DEFAULT_PALETTE, render_class_map

if TYPE_CHECKING:
    from .pipeline import SweepRow

CSV_NAME = "sweep.csv"


def _fmt(value: float) -> str:
    return "nan" if math.isnan(value) else f"{value:.6f}"


class SweepWriter:
    """Streams sweep rows to CSV and PPM class maps under one output directory."""

    def __init__(self, out_dir: Path, class_count: int):
        self.out_dir = Path(out_dir)
        self.class_count = class_count
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "maps").mkdir(exist_ok=True)
        self._file = open(self.out_dir / CSV_NAME, "w", newline="", encoding="utf-8")
        self._csv = csv.writer(self._file)
        header = ["sigma_t", "image", "mode", "overall", "kappa"]
        header += [f"acc_class_{c}" for c in range(1, class_count + 1)]
        self._csv.writerow(header)
        self._file.flush()

    def add(self, row: "SweepRow") -> None:
        record = [row.sigma_label, row.image, row.mode, _fmt(row.overall), _fmt(row.kappa)]
        record += [_fmt(v) for v in row.per_class]
        self._csv.writerow(record)
        self._file.flush()
        if row.predicted is not None:
            name = f"map_{row.sigma_label}_img{row.image}_{row.mode}.ppm"
            render_class_map(row.predicted, DEFAULT_PALETTE, self.out_dir / "maps" / name)

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()

    def render_figures(self, rows: list["SweepRow"]) -> list[Path]:
        return render_figures(rows, self.out_dir, self.class_count)


def _grid_positions(rows: list["SweepRow"]) -> list[str]:
    seen: list[str] = []
    for row in rows:
        if row.sigma_label not in seen:
            seen.append(row.sigma_label)
    return seen


def render_figures(rows: list["SweepRow"], out_dir: Path, class_count: int) -> list[Path]:
    """Render accuracy/kappa figures next to the CSV; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = _grid_positions(rows)
    positions = {lab: i for i, lab in enumerate(labels)}
    modes = sorted({r.mode for r in rows})
    images = sorted({r.image for r in rows})
    written = []

    for metric in ("overall", "kappa"):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for mode in modes:
            for img in images:
                pts = [(positions[r.sigma_label], getattr(r, metric))
                       for r in rows if r.mode == mode and r.image == img]
                pts.sort()
                style = "-o" if mode == "individual" else "--s"
                ax.plot([p[0] for p in pts], [p[1] for p in pts], style,
                        markersize=4, label=f"img {img} ({mode})")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=45)
        ax.set_xlabel("sigma_t")
        ax.set_ylabel("overall accuracy" if metric == "overall" else "kappa")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        path = out_dir / f"{metric}_vs_sigma_t.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    for mode in modes:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for c in range(class_count):
            ys = []
            for lab in labels:
                vals = [r.per_class[c] for r in rows
                        if r.mode == mode and r.sigma_label == lab
                        and not math.isnan(r.per_class[c])]
                ys.append(sum(vals) / len(vals) if vals else float("nan"))
            ax.plot(range(len(labels)), ys, "-o", markersize=4, label=f"class {c + 1}")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=45)
        ax.set_xlabel("sigma_t")
        ax.set_ylabel("mean per-class accuracy")
        ax.set_title(mode)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"per_class_{mode}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
