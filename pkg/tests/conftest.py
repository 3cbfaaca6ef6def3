import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from sqreg.assembly import Dataset
from sqreg.splines import make_grid

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240801)


@pytest.fixture
def grid3():
    return make_grid(0.1, 0.9, 0.4)        # levels {0.1, 0.5, 0.9}


@pytest.fixture
def grid9():
    return make_grid(0.1, 0.9, 0.1)


@pytest.fixture
def toy_data(rng):
    n = 60
    x = rng.uniform(0.0, 5.0, size=n)
    y = 1.0 + 0.5 * x + (0.4 + 0.1 * x) * rng.standard_normal(n)
    return Dataset(np.c_[np.ones(n), x], y)
