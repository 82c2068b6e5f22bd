import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def outlier_1d():
    """Nine points at 0 and one at 10."""
    from quasigrad import WeightedDataset

    return WeightedDataset(np.array([0.0] * 9 + [10.0]), good_set=np.arange(9))
