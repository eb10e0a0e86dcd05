import numpy as np
import pytest

from sparsedom.dyadic import build_grid
from sparsedom.operators import radon_operator
from sparsedom.sht import lattice_cloud


def dyadic_centers(m):
    """Centers of the classical dyadic intervals on 2^m cell-centred points."""
    out = {}
    for k in range(m + 1):
        w = 2 ** (m - k)
        out[k] = [i * w + max(w // 2 - 1, 0) for i in range(2 ** k)]
    return out


@pytest.fixture(scope="session")
def interval():
    return lattice_cloud([0.0], [1.0], [64])


@pytest.fixture(scope="session")
def interval_grid(interval):
    return build_grid(interval, 0.5, centers=dyadic_centers(6))


@pytest.fixture(scope="session")
def parabola_cloud():
    return lattice_cloud([-1.0, -1.0], [1.0, 1.0], [32, 128], "parabola")


@pytest.fixture(scope="session")
def parabola_grid(parabola_cloud):
    return build_grid(parabola_cloud, 0.25, seed=0)


@pytest.fixture(scope="session")
def square():
    return lattice_cloud([-1.0, -1.0], [1.0, 1.0], [32, 32])


@pytest.fixture(scope="session")
def square_grid(square):
    return build_grid(square, 0.25, seed=0)


@pytest.fixture(scope="session")
def parabola_op(parabola_cloud):
    return radon_operator(parabola_cloud, "parabola", a=0.25, delta=0.25, J=10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
