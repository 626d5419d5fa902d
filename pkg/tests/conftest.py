"""Shared fixtures: small grids and shapes reused across the test modules."""

import numpy as np
import pytest

from heatlayer.geometry import BoundaryMap
from heatlayer.potentials import SpaceTimeDensity
from heatlayer.quadrature import SpaceGrid, TimeGrid


@pytest.fixture(scope="session")
def unit_circle():
    return BoundaryMap.identity()


@pytest.fixture(scope="session")
def perturbed():
    # rho(theta) = 1 + 0.12 cos(2 theta): smooth, star-shaped, non-circular.
    return BoundaryMap.radial([1.0, 0.0, 0.12])


@pytest.fixture(scope="session")
def tgrid():
    return TimeGrid(1.0, 16)


@pytest.fixture(scope="session")
def sgrid():
    return SpaceGrid(32)


@pytest.fixture(scope="session")
def mu_tcos(tgrid, sgrid):
    """Density mu(t, theta) = t (2 + cos theta), vanishing at t = 0."""
    return SpaceTimeDensity.from_function(
        tgrid, sgrid, lambda t, th: t * (2.0 + np.cos(th))
    )
