"""Shared fixtures: the canonical configuration and cached spectra."""

import functools

import numpy as np
import pytest

from diracinv.core import BoundaryParams, WeightProfile, builtin_potential, make_grid
from diracinv.direct import compute_spectrum
from diracinv.verify import roundtrip_report

W0 = WeightProfile(np.pi / 2, 2.0)
BC0 = BoundaryParams(1.0, 1.0)
GRID = 200

# Lines collected by the acceptance tests, echoed in the terminal summary.
ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def potential(name):
    return builtin_potential(name, make_grid(W0, GRID))


@functools.lru_cache(maxsize=None)
def spectrum(name, n_max, records=False):
    return compute_spectrum(potential(name), W0, BC0, n_max, records=records)


@functools.lru_cache(maxsize=None)
def roundtrip(name, n_max, J=200):
    return roundtrip_report(potential(name), W0, BC0, n_max, J)


@pytest.fixture(scope="session")
def w0():
    return W0


@pytest.fixture(scope="session")
def bc0():
    return BC0


@pytest.fixture(scope="session")
def grid0():
    return make_grid(W0, GRID)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
