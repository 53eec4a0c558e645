import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from evcorr import TaylorHood, unit_square_mesh, velocity_function


@pytest.fixture(scope="session")
def square2():
    mesh = unit_square_mesh(2)
    return mesh, TaylorHood(mesh)


@pytest.fixture(scope="session")
def square4():
    mesh = unit_square_mesh(4)
    return mesh, TaylorHood(mesh)


def random_velocity(space, seed, boundary_zero=True, scale=1.0):
    rng = np.random.default_rng(seed)
    coeffs = scale * rng.standard_normal(space.n_velocity)
    if boundary_zero:
        coeffs[space.velocity_dirichlet] = 0.0
    return velocity_function(space, coeffs)
