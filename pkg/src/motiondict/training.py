"""Self-supervised training loop: objective assembly, optimizer steps, state.

Each step performs one discriminator update (with lazy R1 every
``r1_interval`` steps, scaled by the interval) followed by one
generator+encoder+dictionary update. Everything is deterministic given
the seed and the batch stream; the dictionary's orthonormality holds
after every update by reparameterization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import torch

from .latent import path_from_coefficients, sparsity_penalty
from .losses import (
    PerceptualExtractor,
    adversarial_losses,
    generator_adversarial_loss,
    perceptual_loss,
    r1_penalty,
    reconstruction_loss,
)
from .networks import Animator, Discriminator, NetworkConfig
from .warp import warp_pyramid


class NonFiniteLossError(RuntimeError):
    """Training aborted on a non-finite loss; carries the metrics record."""

    def __init__(self, record: dict):
        super().__init__(f"non-finite loss at step {record.get('step')}: {record}")
        self.record = record


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 10.0          # perceptual weight
    lambda2: float = 0.1           # sparsity weight
    r1_gamma: float = 1.0
    adversarial_weight: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 8
    lr_generator: float = 2e-3
    lr_discriminator: float = 2e-3
    beta1: float = 0.0
    beta2: float = 0.99
    r1_interval: int = 16
    grad_accumulation: int = 1
    seed: int = 0
    checkpoint_every: int = 500
    log_every: int = 25


@dataclass
class Batch:
    """Aligned same-clip (source, driving) image pairs."""

    sources: torch.Tensor
    drivings: torch.Tensor

    def __post_init__(self):
        if self.sources.shape != self.drivings.shape:
            raise ValueError(
                f"source/driving shapes differ: {tuple(self.sources.shape)} vs {tuple(self.drivings.shape)}"
            )

    def __len__(self) -> int:
        return self.sources.shape[0]

    def chunks(self, n: int) -> list["Batch"]:
        if n <= 1:
            return [self]
        return [
            Batch(s, d)
            for s, d in zip(self.sources.chunk(n), self.drivings.chunk(n))
        ]


def animate_pair(model: Animator, x_s: torch.Tensor, x_d: torch.Tensor):
    """Training forward pass: returns (generated, coefficients)."""
    code, pyramid = model.encode_source(x_s)
    coefficients = model.encode_driving(x_d)
    z = code + path_from_coefficients(coefficients, model.dictionary)
    flows = model.generate_flow(z)
    generated = model.render(warp_pyramid(pyramid, flows))
    return generated, coefficients


def generator_objective(
    model: Animator,
    discriminator: Discriminator,
    extractor: PerceptualExtractor,
    batch: Batch,
    weights: LossWeights,
):
    """Weighted training objective and its per-term breakdown.

    Breakdown values are the *unweighted* terms; ``total`` applies the
    weights, so total = recon + l1*perceptual + adv_w*adversarial + l2*sparsity.
    """
    generated, coefficients = animate_pair(model, batch.sources, batch.drivings)
    recon = reconstruction_loss(generated, batch.drivings)
    perceptual = perceptual_loss(generated, batch.drivings, extractor)
    g_adv = generator_adversarial_loss(discriminator(generated))
    sparsity = sparsity_penalty(coefficients)
    total = (
        recon
        + weights.lambda1 * perceptual
        + weights.adversarial_weight * g_adv
        + weights.lambda2 * sparsity
    )
    breakdown = {
        "reconstruction": recon,
        "perceptual": perceptual,
        "adversarial": g_adv,
        "sparsity": sparsity,
    }
    return total, breakdown, generated


class TrainState:
    """Model, discriminator, optimizer moments, and the step counter."""

    def __init__(
        self,
        network: NetworkConfig,
        weights: LossWeights | None = None,
        train: TrainConfig | None = None,
    ):
        self.network_config = network
        self.weights = weights or LossWeights()
        self.train_config = train or TrainConfig()
        torch.manual_seed(self.train_config.seed)
        self.model = Animator(network)
        self.discriminator = Discriminator(network)
        self.extractor = PerceptualExtractor()
        self.step = 0
        self.rng_seed = self.train_config.seed
        self.opt_generator = torch.optim.Adam(
            self.model.parameters(),
            lr=self.train_config.lr_generator,
            betas=(self.train_config.beta1, self.train_config.beta2),
        )
        self.opt_discriminator = torch.optim.Adam(
            self.discriminator.parameters(),
            lr=self.train_config.lr_discriminator,
            betas=(self.train_config.beta1, self.train_config.beta2),
        )


def train_step(state: TrainState, batch: Batch, weights: LossWeights | None = None) -> dict:
    """One discriminator update then one generator update; returns metrics."""
    weights = weights or state.weights
    accumulation = max(1, state.train_config.grad_accumulation)
    chunks = batch.chunks(accumulation)
    scale = 1.0 / len(chunks)
    apply_r1 = weights.r1_gamma > 0 and state.step % state.train_config.r1_interval == 0

    record: dict[str, float] = {"step": state.step}
    if not (torch.isfinite(batch.sources).all() and torch.isfinite(batch.drivings).all()):
        record["batch_finite"] = 0.0
        raise NonFiniteLossError(record)

    def check_finite():
        if not all(math.isfinite(v) for v in record.values()):
            raise NonFiniteLossError(record)

    # discriminator update
    state.opt_discriminator.zero_grad(set_to_none=True)
    d_total = 0.0
    r1_total = 0.0
    for chunk in chunks:
        with torch.no_grad():
            fake, _ = animate_pair(state.model, chunk.sources, chunk.drivings)
        real_scores = state.discriminator(chunk.drivings)
        fake_scores = state.discriminator(fake)
        _, d_loss = adversarial_losses(real_scores, fake_scores)
        d_chunk = d_loss
        if apply_r1:
            r1 = r1_penalty(state.discriminator, chunk.drivings)
            # lazy regularization: scale by the interval to keep strength
            d_chunk = d_chunk + (weights.r1_gamma / 2.0) * r1 * state.train_config.r1_interval
            r1_total += r1.item() * scale
        (d_chunk * scale).backward()
        d_total += d_loss.item() * scale
    record["d_loss"] = d_total
    record["r1"] = r1_total
    check_finite()
    state.opt_discriminator.step()

    # generator + encoder + dictionary update
    state.opt_generator.zero_grad(set_to_none=True)
    g_total = 0.0
    terms = {"reconstruction": 0.0, "perceptual": 0.0, "adversarial": 0.0, "sparsity": 0.0}
    for chunk in chunks:
        total, breakdown, _ = generator_objective(
            state.model, state.discriminator, state.extractor, chunk, weights
        )
        (total * scale).backward()
        g_total += total.item() * scale
        for name, value in breakdown.items():
            terms[name] += value.item() * scale
    record.update(terms)
    record["total"] = g_total
    check_finite()
    state.opt_generator.step()

    state.step += 1
    return record


def run_training(
    state: TrainState,
    batcher,
    steps: int,
    *,
    log_path: Path | None = None,
    checkpoint_dir: Path | None = None,
    on_step=None,
) -> list[dict]:
    """Drive train_step for ``steps`` batches with periodic logging/saving."""
    from .checkpoint import save_checkpoint

    log_file = open(log_path, "a") if log_path else None
    records = []
    try:
        for _ in range(steps):
            sources, drivings = batcher.next_batch()
            record = train_step(state, Batch(sources, drivings))
            records.append(record)
            if log_file and (
                state.step % state.train_config.log_every == 0 or state.step == 1
            ):
                log_file.write(json.dumps(record, sort_keys=True) + "\n")
                log_file.flush()
            if (
                checkpoint_dir is not None
                and state.train_config.checkpoint_every > 0
                and state.step % state.train_config.checkpoint_every == 0
            ):
                save_checkpoint(state, checkpoint_dir)
            if on_step is not None:
                on_step(state, record)
    finally:
        if log_file:
            log_file.close()
    return records
