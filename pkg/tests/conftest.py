import numpy as np
import pytest

from sphereflow.compatibility import InitialDataSpec, generate_initial_data
from sphereflow.geometry import SphereField
from sphereflow.grid import BoxGrid


def theta_field(n: int, alpha: float = 0.5) -> SphereField:
    return generate_initial_data(InitialDataSpec("mirror_symmetric_profile", (alpha,)), BoxGrid((n,)))


def geodesic(n: int, omega: float = 2.0) -> SphereField:
    return generate_initial_data(InitialDataSpec("geodesic", (omega,)), BoxGrid((n,)))


def constant(grid: BoxGrid, direction=(0.0, 0.0, 1.0)) -> SphereField:
    return SphereField(grid, np.broadcast_to(np.asarray(direction, float), grid.shape + (3,)).copy())


def theta_profile_exact(x, alpha=0.5):
    """theta = alpha cos(pi x) and its first two derivatives."""
    th = alpha * np.cos(np.pi * x)
    return th, -alpha * np.pi * np.sin(np.pi * x), -alpha * np.pi**2 * np.cos(np.pi * x)


@pytest.fixture
def theta256():
    return theta_field(256)
