import numpy as np
import pytest

from dualmink.body import compute_geometry, make_random_body
from dualmink.sphere_grid import build_grid


@pytest.fixture(scope="session")
def grid16():
    return build_grid(16)


@pytest.fixture(scope="session")
def grid32():
    return build_grid(32)


@pytest.fixture(scope="session")
def random_bodies32(grid32):
    """Three seeded random bodies at lmax 32 with their geometry."""
    return [(s, compute_geometry(make_random_body(grid32, s))) for s in range(3)]


def fibonacci_sphere(n):
    """Quasi-uniform unit vectors, independent of any quadrature grid."""
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    phi = np.pi * (1.0 + 5**0.5) * k
    s = np.sqrt(1.0 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
