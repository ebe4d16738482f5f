"""Discovery and persistence of human-readable dictionary vector labels.

Vectors acquire meaning after training; labels live in the checkpoint
manifest so the CLI, service, and editor all see the same names. An
automated probe correlates per-frame coefficient traces against synthetic
ground-truth factors to rank candidate labels; manual labeling through
the service remains the primary workflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from . import checkpoint as ckpt
from .inference import source_state, render_code
from .latent import EditRecipe, apply_edit
from .networks import Animator

SWEEP_MAGNITUDES = tuple((k - 5) / 10.0 for k in range(11))  # -0.5 .. 0.5 step 0.1
DEFAULT_RANGE = (-0.5, 0.5)


class LabelError(ValueError):
    """Invalid label map contents (bad index or malformed range)."""


@dataclass(frozen=True)
class LabelEntry:
    label: str
    range: tuple[float, float] = DEFAULT_RANGE
    correlation: float | None = None

    def __post_init__(self):
        lo, hi = self.range
        if not -1.0 <= lo <= hi <= 1.0:
            raise LabelError(f"range {self.range} must be ordered within [-1, 1]")


def default_entry(index: int) -> LabelEntry:
    return LabelEntry(label=f"vector-{index}", range=DEFAULT_RANGE)


class SemanticLabelMap:
    """index -> LabelEntry with defaults for unlabeled vectors."""

    def __init__(self, entries: dict[int, LabelEntry] | None = None):
        self.entries: dict[int, LabelEntry] = dict(entries or {})

    def resolve(self, index: int) -> LabelEntry:
        return self.entries.get(index, default_entry(index))

    def with_defaults(self, size: int) -> dict[int, LabelEntry]:
        return {i: self.resolve(i) for i in range(size)}

    def set(self, index: int, entry: LabelEntry) -> None:
        self.entries[index] = entry

    def validate(self, size: int) -> None:
        for index in self.entries:
            if not 0 <= index < size:
                raise LabelError(f"label index {index} out of range for dictionary size {size}")

    def to_json(self) -> dict:
        payload = {}
        for index, entry in sorted(self.entries.items()):
            item = {"label": entry.label, "range": list(entry.range)}
            if entry.correlation is not None:
                item["correlation"] = entry.correlation
            payload[str(index)] = item
        return payload

    @classmethod
    def from_json(cls, payload: dict | None) -> "SemanticLabelMap":
        entries = {}
        for key, item in (payload or {}).items():
            entries[int(key)] = LabelEntry(
                label=item["label"],
                range=tuple(item.get("range", DEFAULT_RANGE)),
                correlation=item.get("correlation"),
            )
        return cls(entries)


def save_labels(labels: SemanticLabelMap, checkpoint_path) -> None:
    manifest = ckpt.read_manifest(checkpoint_path)
    size = manifest["config"]["network"]["dict_size"]
    labels.validate(size)
    manifest["labels"] = labels.to_json()
    ckpt.write_manifest(checkpoint_path, manifest)


def load_labels(checkpoint_path) -> SemanticLabelMap:
    manifest = ckpt.read_manifest(checkpoint_path)
    return SemanticLabelMap.from_json(manifest.get("labels"))


@torch.no_grad()
def sweep_vector(model: Animator, x_s: torch.Tensor, index: int) -> list[torch.Tensor]:
    """Eleven edits of one vector, magnitudes -0.5..0.5 in steps of 0.1.

    The middle (zero-magnitude) frame is the rendered reconstruction.
    """
    if not 0 <= index < model.config.dict_size:
        raise LabelError(f"vector index {index} out of range")
    z, pyramid = source_state(model, x_s)
    frames = []
    for magnitude in SWEEP_MAGNITUDES:
        z_edit = apply_edit(z, EditRecipe(((index, magnitude),)), model.dictionary)
        frames.append(render_code(model, z_edit, pyramid))
    return frames


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation; 0.0 by convention for a constant trace."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc**2).sum() * (yc**2).sum())
    if denom == 0.0:
        return 0.0
    return float((xc * yc).sum() / denom)


@dataclass(frozen=True)
class CorrelationRow:
    factor: str
    index: int
    correlation: float  # signed mean over clips

    @property
    def strength(self) -> float:
        return abs(self.correlation)


@torch.no_grad()
def coefficient_traces(model: Animator, frames: list[torch.Tensor]) -> np.ndarray:
    """(T, M) motion-coefficient record for one clip."""
    rows = [model.encode_driving(f.unsqueeze(0))[0].numpy() for f in frames]
    return np.stack(rows)


def correlate_with_factors(model: Animator, clips) -> list[CorrelationRow]:
    """Rank dictionary indices by |Pearson corr| against ground-truth factors.

    ``clips`` is an iterable of (frames, params) where params carry the
    per-frame synthetic factors. Correlations are computed per clip and
    averaged (signed), then ranked per factor by absolute value.
    """
    from .synthetic import FACTOR_NAMES

    per_pair: dict[tuple[str, int], list[float]] = {}
    for frames, params in clips:
        traces = coefficient_traces(model, frames)
        factor_traces = {
            name: np.array([getattr(p, name) for p in params], dtype=np.float64)
            for name in FACTOR_NAMES
        }
        for name, factor_trace in factor_traces.items():
            for i in range(traces.shape[1]):
                per_pair.setdefault((name, i), []).append(pearson(traces[:, i], factor_trace))
    rows = [
        CorrelationRow(factor=name, index=i, correlation=float(np.mean(values)))
        for (name, i), values in per_pair.items()
    ]
    rows.sort(key=lambda r: (r.factor, -r.strength, r.index))
    return rows


def best_index(rows: list[CorrelationRow], factor: str) -> CorrelationRow:
    candidates = [r for r in rows if r.factor == factor]
    if not candidates:
        raise LabelError(f"no correlation rows for factor {factor!r}")
    return candidates[0]


def labels_from_correlations(
    rows: list[CorrelationRow], size: int, threshold: float = 0.3
) -> SemanticLabelMap:
    """Assign each factor's best index as its label when above threshold."""
    labels = SemanticLabelMap()
    taken: set[int] = set()
    factors = sorted({r.factor for r in rows})
    ranked = sorted(rows, key=lambda r: -r.strength)
    for row in ranked:
        if row.factor in factors and row.index not in taken and row.strength >= threshold:
            labels.set(
                row.index,
                LabelEntry(label=row.factor, range=DEFAULT_RANGE, correlation=row.strength),
            )
            taken.add(row.index)
            factors.remove(row.factor)
    labels.validate(size)
    return labels
