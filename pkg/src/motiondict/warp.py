"""Differentiable bilinear warping of feature maps and pyramids.

Conventions, which the test oracles depend on bit-for-bit:

- Coordinates are normalized to [-1, 1] with pixel centers at the
  extremes ("align corners"), so a zero flow reproduces the input exactly.
- A flow field stores displacements *added* to the identity grid, two
  channels: index 0 is x (width axis), index 1 is y (height axis). A
  displacement of 1.0 spans half the image width.
- Sample coordinates are clamped to [-1, 1], i.e. out-of-range samples
  replicate the border.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


class SpatialMismatchError(ValueError):
    """Flow and feature spatial sizes (or pyramid level counts) disagree."""


def identity_grid(h: int, w: int, *, dtype=torch.float32, device=None) -> torch.Tensor:
    """Identity sampling grid, shape (2, h, w): channel 0 = x, channel 1 = y.

    Coordinates are linearly spaced over [-1, 1]; a size-1 axis uses 0.
    """
    if h < 1 or w < 1:
        raise SpatialMismatchError(f"grid sizes must be positive, got {h}x{w}")
    xs = torch.linspace(-1.0, 1.0, w, dtype=dtype, device=device) if w > 1 else torch.zeros(1, dtype=dtype, device=device)
    ys = torch.linspace(-1.0, 1.0, h, dtype=dtype, device=device) if h > 1 else torch.zeros(1, dtype=dtype, device=device)
    grid_y, grid_x = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([grid_x, grid_y], dim=0)


def warp(feature: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Bilinearly sample ``feature`` at identity + ``flow`` coordinates.

    Accepts (C, H, W) with (2, H, W) flow, or batched (B, C, H, W) with
    (B, 2, H, W). Differentiable in both arguments. Sampling is computed
    in pixel space as ``index + displacement * (size - 1) / 2`` so a zero
    flow reproduces the input bitwise.
    """
    squeeze = feature.ndim == 3
    if squeeze:
        feature = feature.unsqueeze(0)
    if flow.ndim == 3:
        flow = flow.unsqueeze(0)
    if feature.ndim != 4 or flow.ndim != 4:
        raise SpatialMismatchError(
            f"expected (B,C,H,W) feature and (B,2,H,W) flow, got {tuple(feature.shape)} / {tuple(flow.shape)}"
        )
    if flow.shape[1] != 2:
        raise SpatialMismatchError(f"flow must have 2 channels, got {flow.shape[1]}")
    if feature.shape[0] != flow.shape[0] or feature.shape[-2:] != flow.shape[-2:]:
        raise SpatialMismatchError(
            f"feature {tuple(feature.shape)} and flow {tuple(flow.shape)} sizes disagree"
        )
    b, c, h, w = feature.shape
    dtype, device = feature.dtype, feature.device
    flow = flow.to(dtype)

    ix = torch.arange(w, dtype=dtype, device=device).view(1, 1, w)
    iy = torch.arange(h, dtype=dtype, device=device).view(1, h, 1)
    px = (ix + flow[:, 0] * ((w - 1) / 2.0)).clamp(0.0, float(w - 1))
    py = (iy + flow[:, 1] * ((h - 1) / 2.0)).clamp(0.0, float(h - 1))

    x0 = px.floor()
    y0 = py.floor()
    wx = (px - x0).unsqueeze(1)
    wy = (py - y0).unsqueeze(1)
    x0l = x0.long()
    y0l = y0.long()
    x1l = (x0l + 1).clamp(max=w - 1)
    y1l = (y0l + 1).clamp(max=h - 1)

    flat = feature.reshape(b, c, h * w)

    def gather(yi, xi):
        index = (yi * w + xi).view(b, 1, h * w).expand(b, c, h * w)
        return flat.gather(2, index).view(b, c, h, w)

    f00 = gather(y0l, x0l)
    f01 = gather(y0l, x1l)
    f10 = gather(y1l, x0l)
    f11 = gather(y1l, x1l)
    top = f00 + wx * (f01 - f00)
    bottom = f10 + wx * (f11 - f10)
    out = top + wy * (bottom - top)
    return out.squeeze(0) if squeeze else out


def warp_pyramid(pyramid: list[torch.Tensor], flows: list[torch.Tensor]) -> list[torch.Tensor]:
    """Warp each pyramid level with its matching flow field."""
    if len(pyramid) != len(flows):
        raise SpatialMismatchError(
            f"pyramid has {len(pyramid)} levels but {len(flows)} flows were given"
        )
    return [warp(level, flow) for level, flow in zip(pyramid, flows)]
