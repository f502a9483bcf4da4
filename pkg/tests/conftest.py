import numpy as np
import pytest

from robust_explore.sim import CostModel, LinearSystem

DEAN_A = np.array([[1.01, 0.01, 0.0], [0.01, 1.01, 0.01], [0.0, 0.01, 1.01]])


@pytest.fixture
def dean():
    return LinearSystem(DEAN_A, np.eye(3))


@pytest.fixture
def scalar_sys():
    return LinearSystem(np.array([[1.5]]), np.array([[1.8]]))


@pytest.fixture
def unit_cost():
    return CostModel.identity


def random_stabilizable(rng, dx, du):
    """Random (A, B) with B of full column rank; controllable almost surely."""
    A = rng.normal(scale=0.7, size=(dx, dx))
    B = rng.normal(size=(dx, du))
    return LinearSystem(A, B)
