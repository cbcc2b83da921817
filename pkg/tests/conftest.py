import numpy as np
import pytest

from logsphere import build_grid


@pytest.fixture(scope="session")
def grids():
    """Shared grids (transform tables are cached per grid object)."""
    cache = {}

    def get(n, degree):
        key = (n, degree)
        if key not in cache:
            cache[key] = build_grid(n, degree)
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
