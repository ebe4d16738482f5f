import numpy as np
import pytest
import torch

from motiondict.networks import Animator, NetworkConfig

# small enough that every forward pass is instant, large enough that
# every pyramid level and head is exercised
TINY = NetworkConfig(
    image_size=32,
    latent_dim=32,
    dict_size=8,
    num_scales=3,
    base_channels=8,
    channel_multiplier=2.0,
    blocks_per_scale=1,
    max_channels=64,
)


@pytest.fixture(scope="session")
def tiny_config():
    return TINY


@pytest.fixture()
def tiny_model(tiny_config):
    torch.manual_seed(11)
    model = Animator(tiny_config)
    model.eval()
    return model


@pytest.fixture()
def active_model(tiny_model):
    """Tiny model whose flow heads are perturbed so edits actually move pixels.

    At initialization the flow heads are zero (identity warp), which makes
    distinctness tests vacuous; training is what normally breaks the tie.
    """
    g = torch.Generator().manual_seed(5)
    with torch.no_grad():
        for head in tiny_model.flow_generator.heads:
            head.weight.add_(torch.randn(head.weight.shape, generator=g) * 0.02)
            head.bias.add_(torch.randn(head.bias.shape, generator=g) * 0.02)
    return tiny_model


@pytest.fixture()
def tiny_image(tiny_config):
    torch.manual_seed(3)
    return (torch.rand(3, tiny_config.image_size, tiny_config.image_size) * 2 - 1)


def rand_image(size: int, seed: int = 0) -> torch.Tensor:
    gen = torch.Generator().manual_seed(seed)
    return torch.rand((3, size, size), generator=gen) * 2 - 1


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
