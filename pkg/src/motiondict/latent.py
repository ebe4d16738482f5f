"""Pure algebra of the latent motion space.

A motion dictionary is a learnable M x latent_dim matrix whose *effective*
rows are kept exactly orthonormal by a QR reparameterization of an
unconstrained raw parameter. Motion is expressed as linear navigation:
a base code plus a coefficient-weighted sum of dictionary rows. Edits are
sparse coefficient vectors applied the same way.

All functions here are pure and safe to call concurrently; only the
training loop mutates dictionary parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

RANK_TOLERANCE = 1e-8
EDIT_MAGNITUDE_LIMIT = 1.0


class DimensionMismatchError(ValueError):
    """Inputs whose lengths/shapes violate an operation contract."""


class DegenerateDictionaryError(RuntimeError):
    """Raw dictionary parameters are rank deficient within tolerance."""


class RecipeIndexError(IndexError):
    """Edit recipe refers to a vector index outside the dictionary."""


class EmptyBatchError(ValueError):
    """A batched operation received zero samples."""


def orthonormal_rows(raw: torch.Tensor) -> torch.Tensor:
    """Map an unconstrained M x N matrix to one with orthonormal rows.

    Differentiable in ``raw``. Signs are fixed so that a matrix whose rows
    are already orthogonal with positive scale maps to its row-normalized
    self (identity stays identity).
    """
    if raw.ndim != 2:
        raise DimensionMismatchError(f"expected a 2D matrix, got shape {tuple(raw.shape)}")
    m, n = raw.shape
    if m > n:
        raise DimensionMismatchError(f"rows must not exceed columns, got {m}x{n}")
    # rank check at float64 so genuine deficiency is not masked by
    # single-precision QR noise; tolerance is relative to the largest pivot
    check = torch.linalg.qr(raw.detach().to(torch.float64).transpose(0, 1), mode="r").R
    check_diag = torch.diagonal(check).abs()
    if bool(check_diag.min() < RANK_TOLERANCE * max(1.0, float(check_diag.max()))):
        raise DegenerateDictionaryError(
            f"raw dictionary is rank deficient (min |R_ii| = {check_diag.min().item():.3e})"
        )
    q, r = torch.linalg.qr(raw.transpose(0, 1), mode="reduced")
    diag = torch.diagonal(r)
    return (q * torch.sign(diag)).transpose(0, 1)


class MotionDictionary(nn.Module):
    """Learnable motion dictionary with orthonormal effective rows.

    ``raw`` is the unconstrained parameter the optimizer updates;
    ``effective()`` recomputes the orthonormal rows on every call, so the
    constraint holds exactly after any parameter update.
    """

    def __init__(self, size: int, latent_dim: int):
        super().__init__()
        if size > latent_dim:
            raise DimensionMismatchError(
                f"dictionary size {size} must not exceed latent dim {latent_dim}"
            )
        self.size = size
        self.latent_dim = latent_dim
        self.raw = nn.Parameter(torch.randn(size, latent_dim) / latent_dim**0.5)

    def effective(self) -> torch.Tensor:
        return orthonormal_rows(self.raw)

    def forward(self) -> torch.Tensor:
        return self.effective()


def _effective_rows(dictionary: MotionDictionary | torch.Tensor) -> torch.Tensor:
    if isinstance(dictionary, MotionDictionary):
        return dictionary.effective()
    return dictionary


def path_from_coefficients(
    coefficients: torch.Tensor, dictionary: MotionDictionary | torch.Tensor
) -> torch.Tensor:
    """Expand coefficients to a latent displacement: sum_i a_i * d_i.

    Accepts a single coefficient vector (M,) or a batch (B, M).
    """
    rows = _effective_rows(dictionary)
    if coefficients.shape[-1] != rows.shape[0]:
        raise DimensionMismatchError(
            f"coefficient length {coefficients.shape[-1]} != dictionary size {rows.shape[0]}"
        )
    return coefficients @ rows


def navigate(
    z_ref: torch.Tensor,
    coefficients: torch.Tensor,
    dictionary: MotionDictionary | torch.Tensor,
) -> torch.Tensor:
    """Linear navigation: z_ref plus the coefficient-expanded path."""
    path = path_from_coefficients(coefficients, dictionary)
    if z_ref.shape[-1] != path.shape[-1]:
        raise DimensionMismatchError(
            f"code length {z_ref.shape[-1]} != latent dim {path.shape[-1]}"
        )
    return z_ref + path


def motion_difference(w_t: torch.Tensor, w_1: torch.Tensor) -> torch.Tensor:
    """Element-wise displacement difference w_t - w_1."""
    if w_t.shape != w_1.shape:
        raise DimensionMismatchError(
            f"displacement shapes differ: {tuple(w_t.shape)} vs {tuple(w_1.shape)}"
        )
    return w_t - w_1


def sparsity_penalty(coefficient_batch: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of per-sample L1 norms of the coefficients."""
    if coefficient_batch.ndim == 1:
        coefficient_batch = coefficient_batch.unsqueeze(0)
    if coefficient_batch.ndim != 2:
        raise DimensionMismatchError(
            f"expected (B, M) coefficients, got shape {tuple(coefficient_batch.shape)}"
        )
    if coefficient_batch.shape[0] == 0:
        raise EmptyBatchError("sparsity penalty over an empty batch")
    return coefficient_batch.abs().sum(dim=1).mean()


def _clamp_magnitude(a: float) -> float:
    return max(-EDIT_MAGNITUDE_LIMIT, min(EDIT_MAGNITUDE_LIMIT, float(a)))


@dataclass(frozen=True)
class EditRecipe:
    """Ordered (vector index, magnitude) pairs realizing an edit.

    Duplicate indices are allowed and their magnitudes sum, so a recipe is
    always a linear map on codes. Magnitudes clamp to [-1, 1]; the
    interactive default range is [-0.5, 0.5] in steps of 0.1.
    """

    entries: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        cleaned = []
        for index, magnitude in self.entries:
            if int(index) != index or index < 0:
                raise RecipeIndexError(f"invalid vector index {index!r}")
            cleaned.append((int(index), _clamp_magnitude(magnitude)))
        object.__setattr__(self, "entries", tuple(cleaned))

    @classmethod
    def from_string(cls, text: str) -> "EditRecipe":
        """Parse the CLI flag format ``"i:a,j:b"``, e.g. ``"3:0.3,7:-0.2"``."""
        text = text.strip()
        if not text:
            return cls()
        entries = []
        for part in text.split(","):
            index_text, _, magnitude_text = part.partition(":")
            try:
                entries.append((int(index_text), float(magnitude_text)))
            except ValueError as exc:
                raise ValueError(f"bad recipe entry {part!r}, expected 'index:magnitude'") from exc
        return cls(tuple(entries))

    @classmethod
    def from_file(cls, path: str | Path) -> "EditRecipe":
        """Load a structured recipe file: [{"index": i, "magnitude": a}, ...]."""
        payload = json.loads(Path(path).read_text())
        if isinstance(payload, dict):
            payload = payload["entries"]
        entries = []
        for item in payload:
            if isinstance(item, dict):
                entries.append((item["index"], item["magnitude"]))
            else:
                index, magnitude = item
                entries.append((index, magnitude))
        return cls(tuple(entries))

    def negated(self) -> "EditRecipe":
        return EditRecipe(tuple((i, -a) for i, a in self.entries))

    def validate(self, dictionary_size: int) -> None:
        for index, _ in self.entries:
            if index >= dictionary_size:
                raise RecipeIndexError(
                    f"vector index {index} out of range for dictionary of size {dictionary_size}"
                )

    def to_coefficients(self, dictionary_size: int, *, dtype=torch.float32) -> torch.Tensor:
        """Dense coefficient vector with duplicate indices summed."""
        self.validate(dictionary_size)
        coefficients = torch.zeros(dictionary_size, dtype=dtype)
        for index, magnitude in self.entries:
            coefficients[index] += magnitude
        return coefficients

    def __len__(self) -> int:
        return len(self.entries)


def apply_edit(
    z: torch.Tensor,
    recipe: EditRecipe,
    dictionary: MotionDictionary | torch.Tensor,
) -> torch.Tensor:
    """Apply an edit recipe: z plus the recipe's sparse coefficient path."""
    rows = _effective_rows(dictionary)
    coefficients = recipe.to_coefficients(rows.shape[0], dtype=z.dtype)
    return navigate(z, coefficients, rows)
