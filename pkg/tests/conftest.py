import numpy as np
import pytest

from vortexlink.optics import GridSpec

W0 = 1e-3


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid():
    return GridSpec.for_beam(W0)


@pytest.fixture(scope="session")
def small_grid():
    return GridSpec.for_beam(W0, n=128)
