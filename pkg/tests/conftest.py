import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240611))


@pytest.fixture
def spike():
    """Leaves (-2, 0, ..., 0, 2) at depth 3."""
    from weakbmo.dyadic import DyadicSimpleFunction

    return DyadicSimpleFunction(1, 3, [-2.0, 0, 0, 0, 0, 0, 0, 2.0])
