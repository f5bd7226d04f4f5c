import numpy as np
import pytest

import horolab as hl
from horolab import observables as obs
from horolab.rng import Stream


@pytest.fixture(scope="session")
def square():
    return hl.reduce(np.eye(2))


@pytest.fixture(scope="session")
def bulk():
    return obs.get_preset("bulk")


@pytest.fixture(scope="session")
def haar_points_1k():
    return [s.point for s in hl.sample_haar(Stream(101, 0), 1000)]
