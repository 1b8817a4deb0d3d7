import numpy as np
import pytest

from eam_classifier import tensor_core
from eam_classifier.configs import EamConfig, ModelConfig


@pytest.fixture(autouse=True)
def fixture_float64():
    with tensor_core.precision("float64"):
        yield


@pytest.fixture(name="rng")
def fixture_rng():
    return np.random.default_rng(1234)


@pytest.fixture(name="small_config")
def fixture_small_config():
    """Smallest model the classifier accepts: 32x32 inputs."""
    return ModelConfig(num_classes=3,
                       image_extent=32,
                       backbone_channels=(8, 16, 32, 64),
                       eam=EamConfig(c_prime=8, mlp_reduction_r=2))
