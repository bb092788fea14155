import numpy as np
import pytest

from cevldp import ModelParams


@pytest.fixture
def cir():
    """Square-root diffusion used throughout: alpha = 1, beta = 0, sigma = 2, x0 = 1."""
    return ModelParams(gamma=0.5, sigma=2.0, beta=0.0, alpha=1.0, x0=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
