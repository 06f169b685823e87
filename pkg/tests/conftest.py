import numpy as np
import pytest

from dyadic_sparse import DyadicGrid, WeightedGrid


@pytest.fixture
def g1():
    return DyadicGrid(1, 2)


@pytest.fixture
def w_uniform(g1):
    return WeightedGrid.uniform(g1)


@pytest.fixture
def w_1113(g1):
    return WeightedGrid(g1, np.array([1.0, 1.0, 1.0, 3.0]))
