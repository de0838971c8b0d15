import numpy as np
import pytest

from carleman_toolkit.geometry import make_cap, make_cone, manufacture
from carleman_toolkit.material import MaterialParams, Medium


@pytest.fixture(scope="session")
def params():
    """lambda = mu = nu = beta = epsilon = 1, alpha = 1/2, rho = theta = 1, sigma = 2."""
    return MaterialParams(1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 1.0, 1.0, 2.0)


@pytest.fixture(scope="session")
def medium(params):
    return Medium.build(params)


@pytest.fixture(scope="session")
def cap(medium):
    domain, surface, plane = make_cap(1.0, 24)
    return domain, surface, plane


@pytest.fixture(scope="session")
def cone():
    return make_cone(2.0, 1.0, 16)


@pytest.fixture(scope="session")
def cap_solution(cap, medium):
    return manufacture(cap[0], medium, count=4, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
