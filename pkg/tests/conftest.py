import numpy as np
import pytest


def random_complex_symmetric(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + a.T)


def random_real_symmetric(rng, n):
    a = rng.standard_normal((n, n))
    return 0.5 * (a + a.T)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
