import numpy as np
import pytest

from axiharm.rods import RodConfig, SingularMapSpec
from axiharm.seed import build_seed

GAPS = {
    1: [(-1.0, 1.0)],
    2: [(-3.0, -1.0), (1.0, 3.0)],
    3: [(-4.0, -2.5), (-0.5, 0.5), (2.0, 3.5)],
}


def two_gap_spec():
    """Generic constants for two gaps and k = 1 (used across the suite)."""
    return SingularMapSpec(np.array([0.3, -0.2, 0.5]), np.array([[0.2], [-0.4], [0.1]]))


@pytest.fixture(scope="session")
def two_gap():
    rods = RodConfig(GAPS[2])
    spec = two_gap_spec()
    return rods, spec, build_seed(rods, spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
