import numpy as np
import pytest

from snsverify.dynamics import uniform_noise
from snsverify.engine import set_threads
from snsverify.spectral import FourierField, PhysicsParams, make_grid

set_threads(2)


@pytest.fixture(scope="session")
def grid4():
    return make_grid(4)


@pytest.fixture(scope="session")
def grid8():
    return make_grid(8)


@pytest.fixture(scope="session")
def params():
    return PhysicsParams(nu=1.6, n_forced=2)


@pytest.fixture(scope="session")
def noise8(grid8):
    return uniform_noise(grid8, 2, 0.2)


@pytest.fixture(scope="session")
def noise4(grid4):
    return uniform_noise(grid4, 2, 0.2)


def random_field_on(grid, rng, scale=1.0):
    g = rng.standard_normal((grid.n_modes, 2))
    return FourierField(grid, scale * (g[:, 0] + 1j * g[:, 1]) / np.sqrt(2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(42)
