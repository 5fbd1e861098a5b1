import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nlrb.fem import build_mesh

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture(scope="session")
def mesh5():
    return build_mesh(0.0, 1.0, 32)


@pytest.fixture(scope="session")
def mesh7():
    return build_mesh(0.0, 1.0, 128)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
