import numpy as np
import pytest

from sisindex import kernels
from sisindex.datagen import GenConfig, generate


@pytest.fixture(scope="session")
def small_ds():
    return generate(GenConfig(seed=7, n_items=400, n_queries=40, num_big=20, num_child=60, dim=16))


@pytest.fixture(scope="session")
def seed42_ds():
    return generate(GenConfig(seed=42, n_items=2000, n_queries=200, num_big=50, num_child=200))


@pytest.fixture(params=sorted(kernels.backends()))
def backend(request):
    return kernels.backends()[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
