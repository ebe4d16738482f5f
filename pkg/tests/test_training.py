import dataclasses

import pytest
import torch

from motiondict.networks import Animator
from motiondict.training import (
    Batch,
    LossWeights,
    NonFiniteLossError,
    TrainConfig,
    TrainState,
    animate_pair,
    generator_objective,
    train_step,
)


def make_batch(config, seed=0, batch=4):
    gen = torch.Generator().manual_seed(seed)
    s = config.image_size
    return Batch(
        torch.rand((batch, 3, s, s), generator=gen) * 2 - 1,
        torch.rand((batch, 3, s, s), generator=gen) * 2 - 1,
    )


@pytest.fixture()
def tiny_state(tiny_config):
    return TrainState(tiny_config, train=TrainConfig(batch_size=4, seed=0))


class TestLossWeights:
    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(lambda1=-1.0)


class TestGeneratorObjective:
    def test_zero_weights_reduce_to_reconstruction(self, tiny_state, tiny_config):
        batch = make_batch(tiny_config)
        weights = LossWeights(lambda1=0.0, lambda2=0.0, adversarial_weight=0.0)
        total, breakdown, _ = generator_objective(
            tiny_state.model, tiny_state.discriminator, tiny_state.extractor, batch, weights
        )
        assert total.item() == pytest.approx(breakdown["reconstruction"].item(), abs=1e-7)

    def test_breakdown_sums_to_total(self, tiny_state, tiny_config):
        batch = make_batch(tiny_config, seed=1)
        weights = LossWeights()
        total, breakdown, _ = generator_objective(
            tiny_state.model, tiny_state.discriminator, tiny_state.extractor, batch, weights
        )
        recombined = (
            breakdown["reconstruction"]
            + weights.lambda1 * breakdown["perceptual"]
            + weights.adversarial_weight * breakdown["adversarial"]
            + weights.lambda2 * breakdown["sparsity"]
        )
        assert abs(total.item() - recombined.item()) < 1e-6

    def test_doubling_sparsity_weight_isolates_term(self, tiny_state, tiny_config):
        batch = make_batch(tiny_config, seed=2)
        w1 = LossWeights(lambda2=0.1)
        w2 = LossWeights(lambda2=0.2)
        t1, b1, _ = generator_objective(
            tiny_state.model, tiny_state.discriminator, tiny_state.extractor, batch, w1
        )
        t2, _, _ = generator_objective(
            tiny_state.model, tiny_state.discriminator, tiny_state.extractor, batch, w2
        )
        assert t2.item() - t1.item() == pytest.approx(0.1 * b1["sparsity"].item(), abs=1e-6)

    def test_sparsity_weight_monotonicity(self, tiny_state, tiny_config):
        batch = make_batch(tiny_config, seed=3)
        values = []
        for lambda2 in (0.0, 0.1, 0.5):
            total, breakdown, _ = generator_objective(
                tiny_state.model,
                tiny_state.discriminator,
                tiny_state.extractor,
                batch,
                LossWeights(lambda2=lambda2),
            )
            values.append(total.item())
        assert breakdown["sparsity"].item() > 0
        assert values[0] < values[1] < values[2]


class TestTrainStep:
    def test_determinism_across_runs(self, tiny_config):
        records = []
        for _ in range(2):
            state = TrainState(tiny_config, train=TrainConfig(seed=7))
            batch = make_batch(tiny_config, seed=7)
            records.append([train_step(state, batch), train_step(state, batch)])
        assert records[0] == records[1]

    def test_step_increments_by_one(self, tiny_state, tiny_config):
        before = tiny_state.step
        train_step(tiny_state, make_batch(tiny_config))
        assert tiny_state.step == before + 1

    def test_orthonormality_after_step(self, tiny_state, tiny_config):
        for seed in range(3):
            train_step(tiny_state, make_batch(tiny_config, seed=seed))
            rows = tiny_state.model.dictionary.effective()
            gram = rows @ rows.T
            assert (gram - torch.eye(tiny_config.dict_size)).abs().max() < 1e-5

    def test_nonfinite_loss_aborts_with_record(self, tiny_state, tiny_config):
        batch = make_batch(tiny_config)
        batch.sources[0, 0, 0, 0] = float("nan")
        with pytest.raises(NonFiniteLossError) as excinfo:
            train_step(tiny_state, batch)
        assert "step" in excinfo.value.record

    def test_gradient_accumulation_runs(self, tiny_config):
        state = TrainState(
            tiny_config, train=TrainConfig(seed=1, grad_accumulation=2, batch_size=4)
        )
        record = train_step(state, make_batch(tiny_config, batch=4))
        assert state.step == 1
        assert all(torch.isfinite(torch.tensor(v)) for v in record.values())

    def test_r1_applied_on_schedule(self, tiny_config):
        state = TrainState(tiny_config, train=TrainConfig(seed=2, r1_interval=2))
        r1_values = []
        for seed in range(3):
            record = train_step(state, make_batch(tiny_config, seed=seed))
            r1_values.append(record["r1"])
        assert r1_values[0] > 0.0  # step 0 hits the lazy schedule
        assert r1_values[1] == 0.0
        assert r1_values[2] > 0.0

    def test_training_reduces_reconstruction_on_fixed_batch(self, tiny_config):
        # quick sanity: reconstruction-only training overfits one batch
        weights = LossWeights(lambda1=0.0, lambda2=0.0, adversarial_weight=0.0, r1_gamma=0.0)
        state = TrainState(tiny_config, weights=weights, train=TrainConfig(seed=3))
        batch = make_batch(tiny_config, seed=3)
        first = train_step(state, batch)["reconstruction"]
        for _ in range(30):
            last = train_step(state, batch)["reconstruction"]
        assert last < first


class TestAnimatePair:
    def test_generated_shape_matches_input(self, tiny_state, tiny_config):
        batch = make_batch(tiny_config, seed=4)
        generated, coefficients = animate_pair(
            tiny_state.model, batch.sources, batch.drivings
        )
        assert generated.shape == batch.sources.shape
        assert coefficients.shape == (len(batch), tiny_config.dict_size)


class TestBatch:
    def test_mismatched_shapes_rejected(self):
        with pytest.raises(ValueError):
            Batch(torch.zeros(2, 3, 8, 8), torch.zeros(3, 3, 8, 8))

    def test_chunks_split_evenly(self, tiny_config):
        batch = make_batch(tiny_config, batch=4)
        chunks = batch.chunks(2)
        assert len(chunks) == 2
        assert all(len(c) == 2 for c in chunks)
