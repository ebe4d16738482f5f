"""Learnable networks: encoder, flow generator, renderer, discriminator.

The feature pyramid runs coarse-to-fine from a fixed 4x4 coarse grid up to
image_size/2, so image_size must equal 4 * 2**num_scales. Residual blocks
are norm -> nonlinearity -> 3x3 conv, twice, with a zero-initialized
residual gain; flow-generator blocks additionally take per-block
scale/shift modulation from the latent code. Flow output heads are
zero-initialized so training starts from the identity warp.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import torch
import torch.nn.functional as F
from torch import nn

from .latent import MotionDictionary

COARSE_SIZE = 4


class ShapeContractError(ValueError):
    """An input tensor does not conform to the network configuration."""


@dataclass(frozen=True)
class NetworkConfig:
    image_size: int = 64
    latent_dim: int = 128
    dict_size: int = 20
    num_scales: int = 4
    base_channels: int = 32
    channel_multiplier: float = 2.0
    blocks_per_scale: int = 2
    max_channels: int = 512

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value <= 0:
                raise ShapeContractError(f"{name} must be positive, got {value}")
        if self.image_size != COARSE_SIZE * 2**self.num_scales:
            raise ShapeContractError(
                f"image_size must equal {COARSE_SIZE}*2^num_scales, "
                f"got {self.image_size} with num_scales={self.num_scales}"
            )
        if self.dict_size > self.latent_dim:
            raise ShapeContractError("dict_size must not exceed latent_dim")

    def level_sizes(self) -> list[int]:
        """Pyramid spatial sizes, coarse to fine."""
        return [COARSE_SIZE * 2**i for i in range(self.num_scales)]

    def level_channels(self) -> list[int]:
        """Feature channels per pyramid level, coarse to fine."""
        return [
            min(round(self.base_channels * self.channel_multiplier**k), self.max_channels)
            for k in reversed(range(self.num_scales))
        ]


# Toy analogues of the published base/middle/large scaling axis.
PRESETS: dict[str, NetworkConfig] = {
    "base": NetworkConfig(base_channels=32, blocks_per_scale=2, dict_size=20),
    "middle": NetworkConfig(base_channels=64, blocks_per_scale=3, dict_size=30),
    "large": NetworkConfig(base_channels=96, blocks_per_scale=4, dict_size=40),
}


def _group_norm(channels: int, affine: bool) -> nn.GroupNorm:
    groups = 8 if channels % 8 == 0 else 1
    return nn.GroupNorm(groups, channels, affine=affine)


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.norm1 = _group_norm(channels, affine=True)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = _group_norm(channels, affine=True)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.gain = nn.Parameter(torch.zeros(()))

    def forward(self, x):
        h = self.conv1(F.leaky_relu(self.norm1(x), 0.2))
        h = self.conv2(F.leaky_relu(self.norm2(h), 0.2))
        return x + self.gain * h


class ModulatedResBlock(nn.Module):
    """Residual block whose normalizations are scaled/shifted from a latent code."""

    def __init__(self, channels: int, latent_dim: int):
        super().__init__()
        self.norm1 = _group_norm(channels, affine=False)
        self.mod1 = nn.Linear(latent_dim, 2 * channels)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = _group_norm(channels, affine=False)
        self.mod2 = nn.Linear(latent_dim, 2 * channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.gain = nn.Parameter(torch.zeros(()))
        nn.init.zeros_(self.mod1.bias)
        nn.init.zeros_(self.mod2.bias)

    @staticmethod
    def _modulate(h, mod, z):
        scale, shift = mod(z).chunk(2, dim=-1)
        return h * (1.0 + scale[:, :, None, None]) + shift[:, :, None, None]

    def forward(self, x, z):
        h = self._modulate(self.norm1(x), self.mod1, z)
        h = self.conv1(F.leaky_relu(h, 0.2))
        h = self._modulate(self.norm2(h), self.mod2, z)
        h = self.conv2(F.leaky_relu(h, 0.2))
        return x + self.gain * h


class Encoder(nn.Module):
    """Shared trunk with a source-code head, a coefficient head, and a
    coarse-to-fine feature pyramid for warping."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        channels = config.level_channels()  # coarse -> fine
        fine_to_coarse = list(reversed(channels))
        self.from_rgb = nn.Conv2d(3, config.base_channels, 3, padding=1)
        downs, stages = [], []
        prev = config.base_channels
        for ch in fine_to_coarse:
            downs.append(nn.Conv2d(prev, ch, 3, stride=2, padding=1))
            stages.append(nn.ModuleList([ResBlock(ch) for _ in range(config.blocks_per_scale)]))
            prev = ch
        self.downs = nn.ModuleList(downs)
        self.stages = nn.ModuleList(stages)
        coarse_ch = channels[0]
        self.code_head = nn.Linear(coarse_ch, config.latent_dim)
        self.coeff_head = nn.Linear(coarse_ch, config.dict_size)

    def _check_input(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim == 3:
            x = x.unsqueeze(0)
        s = self.config.image_size
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != s or x.shape[3] != s:
            raise ShapeContractError(
                f"expected (B,3,{s},{s}) input, got {tuple(x.shape)}"
            )
        return x

    def trunk(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Per-scale features, fine to coarse."""
        x = self._check_input(x)
        h = F.leaky_relu(self.from_rgb(x), 0.2)
        features = []
        for down, blocks in zip(self.downs, self.stages):
            h = F.leaky_relu(down(h), 0.2)
            for block in blocks:
                h = block(h)
            features.append(h)
        return features

    def pooled(self, x: torch.Tensor) -> torch.Tensor:
        """Globally pooled coarsest features, (B, C_coarse)."""
        return self.trunk(x)[-1].mean(dim=(2, 3))

    def encode_source(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Source code plus the coarse-to-fine feature pyramid."""
        features = self.trunk(x)
        code = self.code_head(features[-1].mean(dim=(2, 3)))
        return code, list(reversed(features))

    def encode_driving(self, x: torch.Tensor) -> torch.Tensor:
        """Motion coefficients for a driving image, (B, M)."""
        return self.coeff_head(self.pooled(x))


class FlowGenerator(nn.Module):
    """Decodes one flow field per pyramid level from a latent code alone,
    starting from a learned constant coarse input."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        channels = config.level_channels()
        self.const = nn.Parameter(torch.randn(channels[0], COARSE_SIZE, COARSE_SIZE))
        self.stages = nn.ModuleList(
            nn.ModuleList(
                ModulatedResBlock(ch, config.latent_dim)
                for _ in range(config.blocks_per_scale)
            )
            for ch in channels
        )
        self.heads = nn.ModuleList(nn.Conv2d(ch, 2, 3, padding=1) for ch in channels)
        for head in self.heads:
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)
        self.ups = nn.ModuleList(
            nn.Conv2d(channels[i], channels[i + 1], 3, padding=1)
            for i in range(len(channels) - 1)
        )

    def forward(self, z: torch.Tensor) -> list[torch.Tensor]:
        if z.ndim == 1:
            z = z.unsqueeze(0)
        if z.shape[-1] != self.config.latent_dim:
            raise ShapeContractError(
                f"expected latent dim {self.config.latent_dim}, got {z.shape[-1]}"
            )
        h = self.const.unsqueeze(0).expand(z.shape[0], -1, -1, -1)
        flows = []
        for i, (blocks, head) in enumerate(zip(self.stages, self.heads)):
            for block in blocks:
                h = block(h, z)
            flows.append(head(h))
            if i < len(self.ups):
                h = F.leaky_relu(self.ups[i](F.interpolate(h, scale_factor=2, mode="nearest")), 0.2)
        return flows


class Renderer(nn.Module):
    """Decodes a warped coarse-to-fine feature pyramid into an image in [-1, 1]."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        channels = config.level_channels()
        self.conv_in = nn.Conv2d(channels[0], channels[0], 3, padding=1)
        self.stages = nn.ModuleList(
            nn.ModuleList(ResBlock(ch) for _ in range(config.blocks_per_scale))
            for ch in channels
        )
        self.skips = nn.ModuleList(
            nn.Conv2d(ch, ch, 1) for ch in channels[1:]
        )
        self.ups = nn.ModuleList(
            nn.Conv2d(channels[i], channels[i + 1], 3, padding=1)
            for i in range(len(channels) - 1)
        )
        self.up_final = nn.Conv2d(channels[-1], config.base_channels, 3, padding=1)
        self.norm_out = _group_norm(config.base_channels, affine=True)
        self.to_rgb = nn.Conv2d(config.base_channels, 3, 3, padding=1)

    def forward(self, pyramid: list[torch.Tensor]) -> torch.Tensor:
        channels = self.config.level_channels()
        sizes = self.config.level_sizes()
        if len(pyramid) != len(sizes):
            raise ShapeContractError(
                f"expected {len(sizes)} pyramid levels, got {len(pyramid)}"
            )
        pyramid = [p.unsqueeze(0) if p.ndim == 3 else p for p in pyramid]
        for level, (ch, size) in zip(pyramid, zip(channels, sizes)):
            if level.shape[1] != ch or level.shape[-1] != size or level.shape[-2] != size:
                raise ShapeContractError(
                    f"pyramid level {tuple(level.shape)} does not match ({ch},{size},{size})"
                )
        h = F.leaky_relu(self.conv_in(pyramid[0]), 0.2)
        for i, blocks in enumerate(self.stages):
            if i > 0:
                h = h + self.skips[i - 1](pyramid[i])
            for block in blocks:
                h = block(h)
            if i < len(self.ups):
                h = F.leaky_relu(self.ups[i](F.interpolate(h, scale_factor=2, mode="nearest")), 0.2)
        h = F.leaky_relu(self.up_final(F.interpolate(h, scale_factor=2, mode="nearest")), 0.2)
        h = F.leaky_relu(self.norm_out(h), 0.2)
        return torch.tanh(self.to_rgb(h))


class Discriminator(nn.Module):
    """Patch-free realness critic: strided conv stack to 4x4, then a linear logit."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        channels = list(reversed(config.level_channels()))  # fine -> coarse
        self.from_rgb = nn.Conv2d(3, config.base_channels, 3, padding=1)
        convs = []
        prev = config.base_channels
        for ch in channels:
            convs.append(nn.Conv2d(prev, ch, 3, stride=2, padding=1))
            prev = ch
        self.convs = nn.ModuleList(convs)
        self.out = nn.Linear(prev * COARSE_SIZE * COARSE_SIZE, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        squeeze = x.ndim == 3
        if squeeze:
            x = x.unsqueeze(0)
        s = self.config.image_size
        if x.shape[1:] != (3, s, s):
            raise ShapeContractError(f"expected (B,3,{s},{s}) input, got {tuple(x.shape)}")
        h = F.leaky_relu(self.from_rgb(x), 0.2)
        for conv in self.convs:
            h = F.leaky_relu(conv(h), 0.2)
        score = self.out(h.flatten(1)).squeeze(1)
        return score.squeeze(0) if squeeze else score


class Animator(nn.Module):
    """Bundle of encoder, motion dictionary, flow generator and renderer."""

    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        self.encoder = Encoder(config)
        self.dictionary = MotionDictionary(config.dict_size, config.latent_dim)
        self.flow_generator = FlowGenerator(config)
        self.renderer = Renderer(config)

    def encode_source(self, x):
        return self.encoder.encode_source(x)

    def encode_driving(self, x):
        return self.encoder.encode_driving(x)

    def generate_flow(self, z):
        return self.flow_generator(z)

    def render(self, warped_pyramid):
        return self.renderer(warped_pyramid)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
