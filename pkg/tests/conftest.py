import numpy as np
import pytest

from helmray.geometry import (TruncationGeometry, disk_obstacle,
                              identity_coefficients, nu_bump_coefficients)


@pytest.fixture(scope="session")
def ident():
    return identity_coefficients()


@pytest.fixture(scope="session")
def nu_bump():
    # the shipped refractive-bump preset: nu_max = 2, support radius 0.5
    return nu_bump_coefficients(amplitude=1.0, width=0.5)


@pytest.fixture(scope="session")
def unit_ball_geom():
    return TruncationGeometry(R1=0.5, R=1.0, R_ray=1.25)


@pytest.fixture(scope="session")
def half_disk():
    return disk_obstacle(0.5)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))
