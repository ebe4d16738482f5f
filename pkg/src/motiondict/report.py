"""Evaluation reports: delimited tables plus matplotlib figures.

``eval`` writes a report directory:
    report.tsv        metric <tab> value <tab> count summary rows
    per_frame.tsv     optional per-clip, per-frame metric rows
    figures/*.png     metric curves, activation heatmap, loss curves
Heatmap *data* PNGs stay lossless grayscale (see metrics module); the
figures here are presentation renderings.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import json

import matplotlib.pyplot as plt
import numpy as np


@dataclass(frozen=True)
class MetricRow:
    metric: str
    value: float | str  # "n/a" for unplugged metrics
    count: int


def format_value(value) -> str:
    if isinstance(value, str):
        return value
    return f"{value:.6f}"


def write_metrics_report(rows: list[MetricRow], path: Path | str) -> Path:
    path = Path(path)
    lines = ["metric\tvalue\tcount"]
    lines += [f"{r.metric}\t{format_value(r.value)}\t{r.count}" for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_per_frame_rows(rows: list[dict], path: Path | str) -> Path:
    path = Path(path)
    if not rows:
        path.write_text("clip\tframe\n")
        return path
    columns = list(rows[0].keys())
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(format_value(row[c]) if isinstance(row[c], float) else str(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n")
    return path


def plot_metric_curves(per_frame: list[dict], metric_names: list[str], out_path: Path | str) -> None:
    """Per-frame metric traces, one panel per metric, clips overlaid."""
    clips = sorted({row["clip"] for row in per_frame})
    fig, axes = plt.subplots(len(metric_names), 1, figsize=(7, 2.4 * len(metric_names)), sharex=True)
    if len(metric_names) == 1:
        axes = [axes]
    for ax, metric in zip(axes, metric_names):
        for clip in clips:
            frames = [row["frame"] for row in per_frame if row["clip"] == clip]
            values = [row[metric] for row in per_frame if row["clip"] == clip]
            ax.plot(frames, values, lw=1.0, alpha=0.7)
        ax.set_ylabel(metric)
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel("frame")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_activation_heatmap(record: np.ndarray, out_path: Path | str, title: str = "coefficient activations") -> None:
    """Presentation heatmap of |a| with a colorbar."""
    fig, ax = plt.subplots(figsize=(6, 3.2))
    im = ax.imshow(np.abs(record), aspect="auto", cmap="viridis", interpolation="nearest")
    ax.set_xlabel("dictionary vector")
    ax.set_ylabel("frame")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="|a|")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_training_log(log_path: Path | str, out_path: Path | str) -> None:
    """Loss-term curves from a line-delimited JSON metrics log."""
    records = []
    for line in Path(log_path).read_text().splitlines():
        if line.strip():
            records.append(json.loads(line))
    if not records:
        return
    steps = [r["step"] for r in records]
    fig, ax = plt.subplots(figsize=(7, 4))
    for key in ("total", "reconstruction", "perceptual", "adversarial", "sparsity", "d_loss"):
        if key in records[0]:
            ax.plot(steps, [r[key] for r in records], label=key, lw=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def contact_sheet(frames, gap: int = 2) -> "np.ndarray":
    """Horizontal strip of (3,H,W) [-1,1] frames as an (H, W', 3) uint8 array."""
    from .data import to_uint8

    tiles = [to_uint8(f) for f in frames]
    h = tiles[0].shape[0]
    spacer = np.full((h, gap, 3), 255, dtype=np.uint8)
    row = []
    for i, tile in enumerate(tiles):
        if i:
            row.append(spacer)
        row.append(tile)
    return np.concatenate(row, axis=1)


def save_contact_sheet(frames, path: Path | str, gap: int = 2) -> None:
    from PIL import Image

    Image.fromarray(contact_sheet(frames, gap)).save(path, format="PNG")
