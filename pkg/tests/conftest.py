import numpy as np
import pytest

from ufslab.prob import FiniteDist, JointDist


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_joint(rng, nx, ny, floor=1e-3):
    """Strictly positive random joint table."""
    w = rng.random((ny, nx)) + floor
    return JointDist(w / w.sum())


def random_dist(rng, n, floor=1e-3):
    w = rng.random(n) + floor
    return FiniteDist(w / w.sum())


@pytest.fixture
def small_joint():
    """The 2x2 working example: entries +-0.1 in the dependence matrix."""
    return JointDist(np.array([[0.3, 0.2], [0.2, 0.3]]))
