import numpy as np
import pytest

from roughhedge.model import (MeanReversionCurve, RoughHestonParams,
                              forward_variance_from_theta)
from roughhedge.special_fn import TimeGrid

DESK = dict(alpha=0.6, lam=2.0, nu=0.3, rho=-0.7, v0=0.04, s0=1.0)


@pytest.fixture(scope="session")
def desk_params():
    return RoughHestonParams(**DESK)


@pytest.fixture(scope="session")
def heston_params():
    """Classical limit of the same desk numbers."""
    return RoughHestonParams(**{**DESK, "alpha": 1.0})


@pytest.fixture(scope="session")
def grid512():
    return TimeGrid.uniform(1.0, 512)


@pytest.fixture(scope="session")
def flat_theta(grid512):
    return MeanReversionCurve.flat(DESK["v0"], grid512)


@pytest.fixture(scope="session")
def flat_xi(desk_params, flat_theta):
    return forward_variance_from_theta(desk_params, flat_theta)


def max_abs(x):
    return float(np.max(np.abs(np.asarray(x))))
