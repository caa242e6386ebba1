import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from witsda.quadrature import Grid1D, uniform_grid

settings.register_profile(
    "witsda", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("witsda")


@pytest.fixture
def toy_src():
    """Three source points with hand-picked probabilities."""
    return Grid1D(np.array([-1.0, 0.0, 1.0]), np.array([0.3, 0.45, 0.25]))


@pytest.fixture
def toy_y():
    return uniform_grid(-5.0, 5.0, 21)


@pytest.fixture
def toy_z():
    return uniform_grid(-6.0, 6.0, 25)


def grid_spec(g):
    """(start, step, n) triple used by the loop oracles."""
    return g.start, g.step, len(g)
