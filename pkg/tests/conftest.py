import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vfhilbert.geometry import Lattice
from vfhilbert.grid import GridSpec

settings.register_profile("desk", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("desk")


@pytest.fixture(scope="session")
def lat64():
    return Lattice(GridSpec(64), 1 / 8, 3)


@pytest.fixture(scope="session")
def lat128():
    return Lattice(GridSpec(128), 1 / 16, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
