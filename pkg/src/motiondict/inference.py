"""Edit-warp-render inference: reconstruction, reenactment, editing.

All paths share one code route: reconstruct the source in latent space,
optionally edit it along dictionary directions, add per-frame motion
differences from the driving clip, then decode flows, warp the cached
source pyramid, and render. The source pyramid is computed once per
request and reused for every frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .latent import EditRecipe, apply_edit, motion_difference, path_from_coefficients
from .networks import Animator
from .warp import warp_pyramid


class EmptyDrivingError(ValueError):
    """An animation request carried no driving frames."""


@dataclass
class AnimationRequest:
    source: torch.Tensor
    driving: list[torch.Tensor]
    recipe: EditRecipe = field(default_factory=EditRecipe)

    def __post_init__(self):
        if len(self.driving) < 1:
            raise EmptyDrivingError("driving clip must contain at least one frame")


def _single(x: torch.Tensor) -> torch.Tensor:
    return x.unsqueeze(0) if x.ndim == 3 else x


@torch.no_grad()
def source_state(model: Animator, x_s: torch.Tensor):
    """Reconstruction code z(s->s) and the source feature pyramid."""
    xb = _single(x_s)
    code, pyramid = model.encode_source(xb)
    coefficients = model.encode_driving(xb)
    z = code + path_from_coefficients(coefficients, model.dictionary)
    return z, pyramid


@torch.no_grad()
def render_code(model: Animator, z: torch.Tensor, pyramid) -> torch.Tensor:
    """Decode one latent code against a cached source pyramid."""
    flows = model.generate_flow(z)
    return model.render(warp_pyramid(pyramid, flows))[0]


@torch.no_grad()
def reconstruct_code(model: Animator, x_s: torch.Tensor) -> torch.Tensor:
    """z(s->s): the source code navigated by its own motion coefficients."""
    z, _ = source_state(model, x_s)
    return z[0]


@torch.no_grad()
def driving_paths(model: Animator, frames: list[torch.Tensor], smoothing: float = 0.0):
    """Per-frame latent displacements from the driving clip.

    ``smoothing`` > 0 applies exponential smoothing to the coefficient
    traces (demo affordance, off by default).
    """
    paths = []
    smoothed = None
    for frame in frames:
        coefficients = model.encode_driving(_single(frame))
        if smoothing > 0.0 and smoothed is not None:
            coefficients = smoothing * smoothed + (1.0 - smoothing) * coefficients
        smoothed = coefficients
        paths.append(path_from_coefficients(coefficients, model.dictionary))
    return paths


@torch.no_grad()
def self_reenact(
    model: Animator, x_s: torch.Tensor, driving: list[torch.Tensor]
) -> list[torch.Tensor]:
    """Animate a portrait with its own clip: z_t = z(s->r) + w(r->t)."""
    if len(driving) < 1:
        raise EmptyDrivingError("driving clip must contain at least one frame")
    xb = _single(x_s)
    code, pyramid = model.encode_source(xb)
    frames = []
    for w_t in driving_paths(model, driving):
        frames.append(render_code(model, code + w_t, pyramid))
    return frames


@torch.no_grad()
def cross_reenact(
    model: Animator, request: AnimationRequest, smoothing: float = 0.0, on_frame=None
) -> list[torch.Tensor]:
    """Edit the source reconstruction, then add driving motion differences.

    z_t = edit(z(s->s)) + (w(r->t) - w(r->1)); with an empty recipe the
    first output frame is exactly the rendered source reconstruction.
    """
    z, pyramid = source_state(model, request.source)
    request.recipe.validate(model.config.dict_size)
    z_edit = apply_edit(z, request.recipe, model.dictionary)
    paths = driving_paths(model, request.driving, smoothing)
    frames = []
    for t, w_t in enumerate(paths):
        z_t = z_edit + motion_difference(w_t, paths[0])
        frames.append(render_code(model, z_t, pyramid))
        if on_frame is not None:
            on_frame(t, len(paths))
    return frames


@torch.no_grad()
def edit_image(model: Animator, x_s: torch.Tensor, recipe: EditRecipe) -> torch.Tensor:
    """Render the edited source reconstruction."""
    z, pyramid = source_state(model, x_s)
    recipe.validate(model.config.dict_size)
    z_edit = apply_edit(z, recipe, model.dictionary)
    return render_code(model, z_edit, pyramid)


@torch.no_grad()
def edit_video(
    model: Animator, frames: list[torch.Tensor], recipe: EditRecipe
) -> list[torch.Tensor]:
    """Edit the first frame, then transfer the clip's own motion onto it."""
    if len(frames) < 1:
        raise EmptyDrivingError("video must contain at least one frame")
    return cross_reenact(model, AnimationRequest(source=frames[0], driving=frames, recipe=recipe))
