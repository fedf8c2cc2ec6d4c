import numpy as np
import pytest
import torch

from rift.dataio import SyntheticSpec, generate_synthetic
from rift.networks import Generator, GeneratorConfig


TINY_CFG = GeneratorConfig(
    image_size=16, num_regions=3, num_domains=2, style_dim=8, base_channels=8
)


@pytest.fixture
def tiny_generator() -> Generator:
    torch.manual_seed(11)
    return Generator(TINY_CFG)


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory):
    """Small on-disk synthetic dataset shared across the unit tests."""
    out = tmp_path_factory.mktemp("synth")
    spec = SyntheticSpec(image_size=32, samples_per_domain=20, test_fraction=0.2, seed=3)
    manifest_path = generate_synthetic(spec, out)
    return manifest_path.parent


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
