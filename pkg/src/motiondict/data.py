"""Frame-sequence ingestion, dataset manifests, and training-pair sampling.

A dataset is a directory of clip subdirectories, each holding
lexicographically ordered PNG frames (``000000.png`` style) plus an
optional ``factors.json`` with per-frame ground-truth motion factors for
synthetic clips. A ``manifest.json`` at the root lists clips and their
train/val split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .synthetic import SyntheticFaceParams, generate_synthetic_clip

FRAME_PATTERN = "{:06d}.png"
FACTORS_FILENAME = "factors.json"
MANIFEST_FILENAME = "manifest.json"


class DataError(RuntimeError):
    """Unreadable, inconsistent, or missing dataset contents."""


@dataclass
class FrameSequence:
    frames: list[torch.Tensor]
    clip_id: str

    def __post_init__(self):
        if len(self.frames) < 2:
            raise DataError(f"clip {self.clip_id!r} needs >= 2 frames, got {len(self.frames)}")
        shapes = {tuple(f.shape) for f in self.frames}
        if len(shapes) != 1:
            raise DataError(f"clip {self.clip_id!r} has mixed frame shapes: {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.frames)


def decode_image(data: bytes | Path | str) -> torch.Tensor:
    """Decode a PNG (or any PIL-readable file) to a (3, H, W) tensor in [-1, 1].

    8-bit value v maps to v/255*2 - 1, so 0 -> -1 and 255 -> +1.
    """
    import io

    src = io.BytesIO(data) if isinstance(data, bytes) else data
    try:
        with Image.open(src) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    except Exception as exc:
        raise DataError(f"cannot decode image: {exc}") from exc
    tensor = torch.from_numpy(arr).permute(2, 0, 1)
    return tensor * (2.0 / 255.0) - 1.0


def to_uint8(image: torch.Tensor) -> np.ndarray:
    """Quantize a (3, H, W) [-1, 1] tensor to an (H, W, 3) uint8 array."""
    arr = image.detach().cpu().numpy()
    quantized = np.rint((arr + 1.0) * (255.0 / 2.0))
    return np.clip(quantized, 0, 255).astype(np.uint8).transpose(1, 2, 0)


def encode_image(image: torch.Tensor) -> bytes:
    """Encode a (3, H, W) [-1, 1] tensor as lossless PNG bytes."""
    import io

    buffer = io.BytesIO()
    Image.fromarray(to_uint8(image)).save(buffer, format="PNG")
    return buffer.getvalue()


def save_image(image: torch.Tensor, path: Path | str) -> None:
    Path(path).write_bytes(encode_image(image))


def load_frames(path: Path | str) -> FrameSequence:
    """Load a clip directory of lexicographically ordered frame files."""
    clip_dir = Path(path)
    if not clip_dir.is_dir():
        raise DataError(f"clip directory not found: {clip_dir}")
    files = sorted(p for p in clip_dir.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise DataError(f"no frames in {clip_dir}")
    frames = [decode_image(p) for p in files]
    return FrameSequence(frames=frames, clip_id=clip_dir.name)


def load_factors(path: Path | str) -> list[SyntheticFaceParams] | None:
    factors_file = Path(path) / FACTORS_FILENAME
    if not factors_file.exists():
        return None
    payload = json.loads(factors_file.read_text())
    return [SyntheticFaceParams.from_dict(d) for d in payload]


@dataclass(frozen=True)
class ClipEntry:
    clip_id: str
    path: str
    frames: int
    size: int
    split: str  # "train" or "val"


@dataclass
class DatasetManifest:
    root: Path
    clips: list[ClipEntry]

    def __post_init__(self):
        by_split: dict[str, set[str]] = {}
        for entry in self.clips:
            by_split.setdefault(entry.split, set()).add(entry.clip_id)
        overlap = by_split.get("train", set()) & by_split.get("val", set())
        if overlap:
            raise DataError(f"clips in both splits: {sorted(overlap)}")

    def split(self, name: str) -> list[ClipEntry]:
        return [c for c in self.clips if c.split == name]

    def load_clip(self, entry: ClipEntry) -> FrameSequence:
        return load_frames(self.root / entry.path)

    def load_split(self, name: str) -> list[FrameSequence]:
        return [self.load_clip(entry) for entry in self.split(name)]


def write_manifest(root: Path | str, clips: list[ClipEntry]) -> Path:
    root = Path(root)
    payload = {
        "clips": [
            {
                "clip_id": c.clip_id,
                "path": c.path,
                "frames": c.frames,
                "size": c.size,
                "split": c.split,
            }
            for c in clips
        ]
    }
    path = root / MANIFEST_FILENAME
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(root: Path | str) -> DatasetManifest:
    root = Path(root)
    manifest_file = root / MANIFEST_FILENAME
    if not manifest_file.exists():
        raise DataError(f"no {MANIFEST_FILENAME} under {root}")
    payload = json.loads(manifest_file.read_text())
    clips = [ClipEntry(**entry) for entry in payload["clips"]]
    for entry in clips:
        if not (root / entry.path).is_dir():
            raise DataError(f"clip path missing: {root / entry.path}")
    return DatasetManifest(root=root, clips=clips)


def synthesize_dataset(
    out_dir: Path | str,
    clips: int,
    frames: int,
    size: int,
    seed: int,
    val_fraction: float = 0.125,
) -> DatasetManifest:
    """Render a synthetic dataset to disk: frame dirs, factors, manifest.

    Deterministic in (clips, frames, size, seed). The trailing
    ``val_fraction`` of clips (at least one) form the validation split.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_val = max(1, round(clips * val_fraction)) if clips > 1 else 0
    entries = []
    for i in range(clips):
        clip_seed = seed * 100003 + i
        clip_id = f"clip_{i:04d}"
        clip_dir = out / clip_id
        clip_dir.mkdir(exist_ok=True)
        frame_tensors, params = generate_synthetic_clip(clip_seed, frames, size)
        for t, frame in enumerate(frame_tensors):
            save_image(frame, clip_dir / FRAME_PATTERN.format(t))
        (clip_dir / FACTORS_FILENAME).write_text(
            json.dumps([p.as_dict() for p in params], indent=2, sort_keys=True) + "\n"
        )
        split = "val" if i >= clips - n_val else "train"
        entries.append(ClipEntry(clip_id=clip_id, path=clip_id, frames=frames, size=size, split=split))
    write_manifest(out, entries)
    return DatasetManifest(root=out, clips=entries)


def sample_training_pair(
    sequence: FrameSequence, rng: np.random.Generator
) -> tuple[torch.Tensor, torch.Tensor]:
    """Draw a (source, driving) frame pair uniformly without replacement."""
    n = len(sequence)
    if n < 2:
        raise DataError(f"clip {sequence.clip_id!r} too short to sample a pair")
    i, j = rng.choice(n, size=2, replace=False)
    return sequence.frames[int(i)], sequence.frames[int(j)]


class PairBatcher:
    """Deterministic same-clip pair batches for training.

    Every batch element picks a clip uniformly, then a frame pair without
    replacement; all randomness flows from the seed.
    """

    def __init__(self, sequences: list[FrameSequence], batch_size: int, seed: int):
        if not sequences:
            raise DataError("no training clips")
        self.sequences = sequences
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)

    def next_batch(self) -> tuple[torch.Tensor, torch.Tensor]:
        sources, drivings = [], []
        for _ in range(self.batch_size):
            clip = self.sequences[int(self.rng.integers(len(self.sequences)))]
            x_s, x_d = sample_training_pair(clip, self.rng)
            sources.append(x_s)
            drivings.append(x_d)
        return torch.stack(sources), torch.stack(drivings)
