import warnings

import numpy as np
import pytest

from rehomog.cellsolve import compute_cell_correctors
from rehomog.coefficients import make_coefficient
from rehomog.domain import UnderResolvedWarning


@pytest.fixture(autouse=True)
def _quiet_resolution_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnderResolvedWarning)
        yield


@pytest.fixture(scope="session")
def trig1():
    return make_coefficient("trig_product", dim=1)


@pytest.fixture(scope="session")
def cells_trig1(trig1):
    return compute_cell_correctors(trig1, 512, 32, method="direct")


@pytest.fixture(scope="session")
def modlam():
    return make_coefficient("modulated_laminate")


@pytest.fixture(scope="session")
def cells_modlam(modlam):
    return compute_cell_correctors(modlam, 64, 8)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
