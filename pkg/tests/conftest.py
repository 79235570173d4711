import numpy as np
import pytest

import sirspline as ss


@pytest.fixture(scope="session")
def paper_scale_path():
    """One exact Sim-1-style dataset: N=10^4, 71 daily observations,
    beta=0.3, gamma=0.1, 99%/1% initial split."""
    rates = ss.RatePair(lambda t: 0.3, 0.1)
    init = ss.CountState(9900, 100, 10000)
    grid = np.arange(71.0)
    full = ss.simulate_exact(rates, init, 70.0, seed=42)
    return ss.sample_path_at(full, grid)


@pytest.fixture
def constant_theta():
    """Constant-rate parameter vector on [0, 70]: beta=0.3, gamma=0.1."""
    knots = ss.KnotVector(0.0, 70.0, (), 0)
    return ss.ParameterVector(0.1, ss.SplineModel(knots, (0.3,)))


def make_constant_path(times, s, i, n):
    return ss.EpidemicPath(np.asarray(times, float), s, i, n)
