"""Deterministic synthetic talking-face generator with ground-truth factors.

Faces are drawn procedurally (head ellipse, eyes, brows, mouth) so that
every pixel is a smooth function of the motion factors, and the geometry
of each feature is available in closed form for test oracles. A clip seed
fixes an identity (proportions and colors) that stays constant across the
clip while the motion factors follow band-limited random trajectories.

Per-frame factor deltas are bounded by SMOOTHNESS_CAP by construction:
trajectories are sums of sinusoids with at most MAX_CYCLES_PER_FRAME
cycles per frame and unit total amplitude, scaled by each factor's
amplitude, so |delta| <= amplitude * 2*pi * MAX_CYCLES_PER_FRAME.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch

FACTOR_NAMES = ("yaw", "pitch", "roll", "mouth_open", "eye_open", "brow_raise")

MAX_CYCLES_PER_FRAME = 1.0 / 24.0
SMOOTHNESS_CAP = 0.25  # bound on per-frame delta of any single factor

# (center, amplitude) of each factor trajectory; amplitude*2*pi/24 < 0.25.
# Pitch/roll/center amplitudes keep eyes above and mouth below the y=0.05
# line for every reachable frame, which estimate_factors relies on.
_TRAJECTORY_RANGES = {
    "yaw": (0.0, 0.85),
    "pitch": (0.0, 0.45),
    "roll": (0.0, 0.4),
    "mouth_open": (0.5, 0.45),
    "eye_open": (0.6, 0.35),
    "brow_raise": (0.0, 0.6),
    "center_x": (0.0, 0.05),
    "center_y": (0.0, 0.05),
}


@dataclass(frozen=True)
class SyntheticFaceParams:
    """Motion factors of one frame; all ranges are enforced at construction."""

    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    mouth_open: float = 0.3
    eye_open: float = 0.8
    brow_raise: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("yaw", "pitch", "roll", "brow_raise"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [-1, 1]")
        for name in ("mouth_open", "eye_open"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if not all(-0.2 <= c <= 0.2 for c in self.center):
            raise ValueError(f"center={self.center} outside [-0.2, 0.2]")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["center"] = list(self.center)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticFaceParams":
        d = dict(d)
        d["center"] = tuple(d.get("center", (0.0, 0.0)))
        return cls(**d)


@dataclass(frozen=True)
class SyntheticIdentity:
    """Per-clip appearance: proportions and colors that do not move."""

    head_rx: float = 0.32
    head_ry: float = 0.40
    eye_scale: float = 1.0
    mouth_width: float = 0.16
    skin: tuple[float, float, float] = (0.8, 0.65, 0.55)
    background: tuple[float, float, float] = (0.82, 0.86, 0.9)

    @classmethod
    def from_seed(cls, seed: int) -> "SyntheticIdentity":
        # skin and background stay bright so only eyes/brows/mouth are dark
        rng = np.random.default_rng(seed * 2654435761 + 17)
        return cls(
            head_rx=0.28 + 0.08 * rng.random(),
            head_ry=0.36 + 0.08 * rng.random(),
            eye_scale=0.85 + 0.3 * rng.random(),
            mouth_width=0.13 + 0.06 * rng.random(),
            skin=tuple(0.55 + 0.35 * rng.random(3)),
            background=tuple(0.7 + 0.25 * rng.random(3)),
        )


def face_geometry(p: SyntheticFaceParams, identity: SyntheticIdentity | None = None) -> dict:
    """Closed-form feature geometry in normalized [-1, 1] image coordinates.

    This is the oracle the renderer draws from; tests measure monotonicity
    (e.g. eye-separation asymmetry vs yaw) directly on these equations.
    """
    ident = identity or SyntheticIdentity()
    cx, cy = p.center
    roll_angle = 0.45 * p.roll
    cos_r, sin_r = math.cos(roll_angle), math.sin(roll_angle)

    def place(dx: float, dy: float) -> tuple[float, float]:
        # rotate feature offsets by roll around the head center
        return (cx + dx * cos_r - dy * sin_r, cy + dx * sin_r + dy * cos_r)

    feature_dx = 0.16 * p.yaw          # yaw slides features sideways
    feature_dy = 0.10 * p.pitch        # pitch slides features vertically
    eye_sep = 0.155 * ident.eye_scale
    # yaw compresses the near eye and stretches the far one
    left_dx = feature_dx - eye_sep * (1.0 - 0.35 * p.yaw)
    right_dx = feature_dx + eye_sep * (1.0 + 0.35 * p.yaw)
    eye_dy = -0.10 + feature_dy
    brow_dy = eye_dy - 0.085 - 0.045 * p.brow_raise + 0.02 * p.pitch
    mouth_dy = 0.22 + 1.4 * feature_dy

    return {
        "head_center": (cx, cy),
        "head_rx": ident.head_rx * (1.0 - 0.12 * p.yaw**2),
        "head_ry": ident.head_ry * (1.0 - 0.08 * p.pitch**2),
        "roll_angle": roll_angle,
        "eye_left": place(left_dx, eye_dy),
        "eye_right": place(right_dx, eye_dy),
        "eye_rx": 0.035 * ident.eye_scale,
        "eye_ry": 0.006 + 0.030 * p.eye_open,
        "eye_separation_asymmetry": (right_dx - feature_dx) - (feature_dx - left_dx),
        "brow_left": place(left_dx, brow_dy),
        "brow_right": place(right_dx, brow_dy),
        "brow_rx": 0.05 * ident.eye_scale,
        "brow_ry": 0.009,
        "mouth_center": place(feature_dx * 1.25, mouth_dy),
        "mouth_rx": ident.mouth_width * (1.0 - 0.15 * p.yaw**2),
        "mouth_ry": 0.012 + 0.085 * p.mouth_open,
    }


def _ellipse_mask(xx, yy, center, rx, ry, angle, pixel_extent):
    """Soft ellipse coverage: ramp width ~1 pixel along the minor axis.

    Sub-pixel-thin shapes stay visible at partial alpha instead of
    vanishing, and coverage varies smoothly with every geometric input.
    """
    dx, dy = xx - center[0], yy - center[1]
    cos_a, sin_a = math.cos(-angle), math.sin(-angle)
    u = (dx * cos_a - dy * sin_a) / rx
    v = (dx * sin_a + dy * cos_a) / ry
    radial = np.sqrt(u * u + v * v)
    width = pixel_extent / min(rx, ry)
    return np.clip(0.5 + (1.0 - radial) / width, 0.0, 1.0)


def render_synthetic_face(
    p: SyntheticFaceParams,
    size: int,
    identity: SyntheticIdentity | None = None,
) -> torch.Tensor:
    """Draw one face, returning a (3, size, size) tensor in [-1, 1].

    Deterministic and anti-aliased; every shape boundary is a smooth ramp
    so the image varies smoothly with every factor.
    """
    ident = identity or SyntheticIdentity()
    geo = face_geometry(p, ident)
    axis = np.linspace(-1.0, 1.0, size, dtype=np.float64)
    xx, yy = np.meshgrid(axis, axis)
    pixel_extent = 2.0 / size

    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = ident.background

    def paint(mask, color):
        nonlocal img
        img = img * (1.0 - mask[:, :, None]) + np.asarray(color)[None, None, :] * mask[:, :, None]

    def ellipse(center_key, rx_key, ry_key):
        return _ellipse_mask(
            xx, yy, geo[center_key], geo[rx_key], geo[ry_key], geo["roll_angle"], pixel_extent
        )

    paint(ellipse("head_center", "head_rx", "head_ry"), ident.skin)
    dark = (0.08, 0.07, 0.09)
    for side in ("left", "right"):
        paint(ellipse(f"brow_{side}", "brow_rx", "brow_ry"), (0.25, 0.18, 0.12))
        paint(ellipse(f"eye_{side}", "eye_rx", "eye_ry"), dark)
    paint(ellipse("mouth_center", "mouth_rx", "mouth_ry"), (0.35, 0.08, 0.10))

    out = np.transpose(img, (2, 0, 1)) * 2.0 - 1.0
    return torch.from_numpy(np.ascontiguousarray(out, dtype=np.float32))


def _trajectory(rng: np.random.Generator, length: int, center: float, amplitude: float) -> np.ndarray:
    """Band-limited trajectory: three sinusoids, unit total amplitude."""
    weights = rng.random(3)
    weights = weights / weights.sum()
    cycles = rng.uniform(1.0 / 64.0, MAX_CYCLES_PER_FRAME, 3)
    phases = rng.uniform(0.0, 2.0 * math.pi, 3)
    t = np.arange(length, dtype=np.float64)
    signal = sum(
        w * np.sin(2.0 * math.pi * c * t + ph) for w, c, ph in zip(weights, cycles, phases)
    )
    return center + amplitude * signal


def generate_trajectories(seed: int, length: int) -> list[SyntheticFaceParams]:
    """Per-frame factor trajectories for one clip."""
    if length < 2:
        raise ValueError(f"clip length must be >= 2, got {length}")
    rng = np.random.default_rng(seed)
    traces = {
        name: _trajectory(rng, length, center, amplitude)
        for name, (center, amplitude) in _TRAJECTORY_RANGES.items()
    }
    params = []
    for t in range(length):
        params.append(
            SyntheticFaceParams(
                yaw=float(traces["yaw"][t]),
                pitch=float(traces["pitch"][t]),
                roll=float(traces["roll"][t]),
                mouth_open=float(np.clip(traces["mouth_open"][t], 0.0, 1.0)),
                eye_open=float(np.clip(traces["eye_open"][t], 0.0, 1.0)),
                brow_raise=float(traces["brow_raise"][t]),
                center=(float(traces["center_x"][t]), float(traces["center_y"][t])),
            )
        )
    return params


def generate_synthetic_clip(
    seed: int, length: int, size: int
) -> tuple[list[torch.Tensor], list[SyntheticFaceParams]]:
    """Render one clip; returns frames and the ground-truth factors per frame."""
    params = generate_trajectories(seed, length)
    identity = SyntheticIdentity.from_seed(seed)
    frames = [render_synthetic_face(p, size, identity) for p in params]
    return frames, params


def estimate_factors(image: torch.Tensor) -> dict[str, float]:
    """Image-based estimates of yaw and mouth_open.

    Dark feature pixels (eyes, brows, mouth) are isolated with a soft
    luminance mask; the trajectory envelope keeps eyes/brows above the
    y = 0.05 line and the mouth below it. Yaw is the horizontal centroid
    of the upper feature mass, mouth_open the total lower feature mass.
    Calibrated for monotonicity, not absolute scale.
    """
    arr = image.detach().to(torch.float64).numpy()
    lum = (arr[0] + arr[1] + arr[2]) / 3.0  # [-1, 1]
    h, w = lum.shape
    dark = 1.0 / (1.0 + np.exp((lum + 0.25) / 0.08))  # soft "is dark" mask
    ys, xs = np.mgrid[0:h, 0:w]
    xs_n = xs / (w - 1) * 2.0 - 1.0
    ys_n = ys / (h - 1) * 2.0 - 1.0

    upper = dark * (ys_n < 0.05)
    yaw_est = float((upper * xs_n).sum() / (upper.sum() + 1e-9))
    mouth_est = float((dark * (ys_n >= 0.05)).sum())

    return {"yaw": yaw_est, "mouth_open": mouth_est}
