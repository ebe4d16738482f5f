"""Training losses: reconstruction, perceptual, non-saturating adversarial, R1.

The default perceptual extractor is a frozen, randomly initialized
4-level conv net built from a fixed seed — a desk-scale stand-in for a
pretrained feature network. Anything with the same call signature
(image batch -> list of feature maps) can be plugged in instead.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

PERCEPTUAL_SEED = 58121


def reconstruction_loss(generated: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over all elements."""
    if generated.shape != target.shape:
        raise ValueError(
            f"shape mismatch: {tuple(generated.shape)} vs {tuple(target.shape)}"
        )
    return (generated - target).abs().mean()


class PerceptualExtractor(nn.Module):
    """Frozen random conv features at four scales, deterministic per seed."""

    def __init__(self, seed: int = PERCEPTUAL_SEED, channels: tuple[int, ...] = (16, 32, 64, 64)):
        super().__init__()
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            convs = []
            prev = 3
            for ch in channels:
                convs.append(nn.Conv2d(prev, ch, 3, stride=2, padding=1))
                prev = ch
            self.convs = nn.ModuleList(convs)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        features = []
        h = x
        for conv in self.convs:
            h = F.leaky_relu(conv(h), 0.2)
            features.append(h)
        return features


def perceptual_loss(
    generated: torch.Tensor, target: torch.Tensor, extractor: nn.Module
) -> torch.Tensor:
    """Sum over feature levels of mean absolute feature differences."""
    feats_g = extractor(generated)
    feats_t = extractor(target)
    if len(feats_g) < 2:
        raise ValueError(f"extractor must produce >= 2 feature levels, got {len(feats_g)}")
    total = feats_g[0].new_zeros(())
    for fg, ft in zip(feats_g, feats_t):
        total = total + (fg - ft).abs().mean()
    return total


def generator_adversarial_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    return F.softplus(-fake_scores).mean()


def discriminator_adversarial_loss(
    real_scores: torch.Tensor, fake_scores: torch.Tensor
) -> torch.Tensor:
    return F.softplus(-real_scores).mean() + F.softplus(fake_scores).mean()


def adversarial_losses(
    real_scores: torch.Tensor, fake_scores: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Non-saturating logistic losses: (generator_loss, discriminator_loss)."""
    return (
        generator_adversarial_loss(fake_scores),
        discriminator_adversarial_loss(real_scores, fake_scores),
    )


def r1_penalty(discriminator: nn.Module, real: torch.Tensor) -> torch.Tensor:
    """Gradient penalty E[||d D(x) / d x||^2] on real images."""
    real = real.detach().requires_grad_(True)
    scores = discriminator(real)
    (grad,) = torch.autograd.grad(scores.sum(), real, create_graph=True)
    return grad.pow(2).sum(dim=(1, 2, 3)).mean()
