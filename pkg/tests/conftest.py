import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from roadsonar.beamform import default_geometry
from roadsonar.signal import ChirpSpec, generate_chirp

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def geom():
    return default_geometry(0)


@pytest.fixture(scope="session")
def chirp():
    return generate_chirp(ChirpSpec())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
