import numpy as np
import pytest

from chaoscalc.chaos_core import HermiteBasis, TimeGrid


@pytest.fixture(scope="session")
def grid():
    return TimeGrid(1.0, 64)


@pytest.fixture(scope="session")
def basis(grid):
    return HermiteBasis(20, grid)


@pytest.fixture(scope="session")
def basis12(grid):
    return HermiteBasis(12, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
