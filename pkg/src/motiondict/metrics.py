"""Reconstruction and interpretability metrics.

PSNR/SSIM treat images as [-1, 1] tensors rescaled internally to [0, 1]
(dynamic range 1.0). LPIPS and FID are pluggable slots with no bundled
weights; reports mark them "n/a" until a callable is registered.
"""

from __future__ import annotations

import numpy as np
import torch
from PIL import Image

from .latent import MotionDictionary

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
ACTIVATION_TAU_DEFAULT = 0.1

# optional hooks for externally supplied perceptual metrics
lpips_slot = None
fid_slot = None


class MetricError(ValueError):
    """Shape or domain violations in metric inputs."""


def _to_unit(image: torch.Tensor | np.ndarray) -> np.ndarray:
    arr = image.detach().cpu().numpy() if torch.is_tensor(image) else np.asarray(image)
    return (arr.astype(np.float64) + 1.0) / 2.0


def l1_distance(a, b) -> float:
    x, y = _to_unit(a) * 2.0 - 1.0, _to_unit(b) * 2.0 - 1.0
    if x.shape != y.shape:
        raise MetricError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.abs(x - y).mean())


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB, capped at 99.0 for identical inputs."""
    x, y = _to_unit(a), _to_unit(b)
    if x.shape != y.shape:
        raise MetricError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()


def _filter_valid(plane: np.ndarray, window: np.ndarray) -> np.ndarray:
    from scipy.signal import correlate2d

    return correlate2d(plane, window, mode="valid")


def ssim(a, b) -> float:
    """Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), range 1.0."""
    x, y = _to_unit(a), _to_unit(b)
    if x.shape != y.shape:
        raise MetricError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.shape[-1] < SSIM_WINDOW or x.shape[-2] < SSIM_WINDOW:
        raise MetricError(f"image {x.shape} smaller than the {SSIM_WINDOW}px SSIM window")
    window = _gaussian_window()
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    values = []
    for xc, yc in zip(x, y):
        mu_x = _filter_valid(xc, window)
        mu_y = _filter_valid(yc, window)
        sigma_x = _filter_valid(xc * xc, window) - mu_x * mu_x
        sigma_y = _filter_valid(yc * yc, window) - mu_y * mu_y
        sigma_xy = _filter_valid(xc * yc, window) - mu_x * mu_y
        ssim_map = ((2.0 * mu_x * mu_y + c1) * (2.0 * sigma_xy + c2)) / (
            (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_x + sigma_y + c2)
        )
        values.append(ssim_map.mean())
    return float(np.mean(values))


def activation_rate(record: np.ndarray | torch.Tensor, tau_rel: float = ACTIVATION_TAU_DEFAULT) -> float:
    """Fraction of coefficient entries above tau_rel times the record's max magnitude."""
    rec = record.detach().cpu().numpy() if torch.is_tensor(record) else np.asarray(record)
    if rec.size == 0:
        raise MetricError("empty activation record")
    if not 0.0 < tau_rel < 1.0:
        raise MetricError(f"tau_rel must lie in (0, 1), got {tau_rel}")
    magnitudes = np.abs(rec)
    peak = magnitudes.max()
    if peak == 0.0:
        return 0.0
    return float((magnitudes > tau_rel * peak).mean())


def export_activation_heatmap(
    record: np.ndarray | torch.Tensor, path, cell_px: int = 1
) -> None:
    """Write a T x M magnitude heatmap as a lossless grayscale PNG.

    Intensity is linear in |a| (scaled to the record's max), so pixel
    brightness is monotone in activation magnitude.
    """
    rec = record.detach().cpu().numpy() if torch.is_tensor(record) else np.asarray(record)
    if rec.size == 0:
        raise MetricError("empty activation record")
    if rec.ndim == 1:
        rec = rec[None, :]
    magnitudes = np.abs(rec).astype(np.float64)
    peak = magnitudes.max()
    normalized = magnitudes / peak if peak > 0 else magnitudes
    pixels = np.rint(normalized * 255.0).astype(np.uint8)
    if cell_px > 1:
        pixels = np.kron(pixels, np.ones((cell_px, cell_px), dtype=np.uint8))
    Image.fromarray(pixels, mode="L").save(path, format="PNG")


def dictionary_coherence(dictionary: MotionDictionary | torch.Tensor) -> float:
    """Largest off-diagonal |<d_i, d_j>| over effective rows."""
    rows = dictionary.effective() if isinstance(dictionary, MotionDictionary) else dictionary
    m = rows.shape[0]
    if m < 2:
        raise MetricError(f"coherence needs >= 2 dictionary rows, got {m}")
    gram = (rows @ rows.T).detach().cpu().numpy()
    off = np.abs(gram - np.diag(np.diag(gram)))
    return float(off.max())


def identity_similarity_proxy(a: torch.Tensor, b: torch.Tensor, model) -> float:
    """Cosine similarity of pooled encoder features.

    This is an encoder-feature proxy, not a face-recognition embedding;
    higher means more similar.
    """
    with torch.no_grad():
        fa = model.encoder.pooled(a.unsqueeze(0) if a.ndim == 3 else a)[0].to(torch.float64)
        fb = model.encoder.pooled(b.unsqueeze(0) if b.ndim == 3 else b)[0].to(torch.float64)
    dot = float((fa * fb).sum())
    denom = float(fa.norm()) * float(fb.norm())
    if denom == 0.0:
        return 0.0
    return max(-1.0, min(1.0, dot / denom))
