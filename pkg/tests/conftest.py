import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from apsest.forward_model import ArrayConfig, build_grid, build_ula_operator

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def default_operator():
    return build_ula_operator(ArrayConfig(), build_grid())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
