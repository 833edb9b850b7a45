import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "weightlab",
    max_examples=40,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("weightlab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
