"""Shared fixtures: canonical transfer plans and a brute-force propagator.

The brute-force helper deliberately avoids the package's spectral route
(scipy expm on the dense matrix) so dynamics tests compare two independent
implementations.
"""

import warnings

import numpy as np
import pytest
from scipy.linalg import expm

from gfsim.model import ArrayConfig
from gfsim.protocol import make_plan

N_SITES = 6
COUPLING = 0.0013


def resonant_template(n_sites=N_SITES, coupling=COUPLING, base=1.0):
    return ArrayConfig(n_sites, np.full(n_sites, float(base)), coupling)


@pytest.fixture(scope="session")
def template():
    return resonant_template()


def _plan(m, n):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return make_plan(resonant_template(), m, n)


@pytest.fixture(scope="session")
def plan_13():
    return _plan(1, 3)


@pytest.fixture(scope="session")
def plan_14():
    return _plan(1, 4)


@pytest.fixture(scope="session")
def plan_24():
    return _plan(2, 4)


@pytest.fixture(scope="session")
def plan_25():
    return _plan(2, 5)


@pytest.fixture(scope="session")
def plan_15():
    return _plan(1, 5)


def brute_force_evolve(hamiltonian, amplitudes, t):
    """exp(-iHt) on the full (vacuum + sites) amplitude vector via scipy."""
    h = np.asarray(getattr(hamiltonian, "matrix", hamiltonian))
    dim = h.shape[0]
    full = np.zeros((dim + 1, dim + 1), dtype=complex)
    full[1:, 1:] = h
    return expm(-1j * full * t) @ np.asarray(amplitudes, dtype=complex)


def read_csv_output(path):
    """Parse one CLI CSV file into (metadata dict, columns, float-ish rows)."""
    import json

    with open(path) as handle:
        lines = [ln.rstrip("\n") for ln in handle]
    assert lines[0].startswith("# "), "missing metadata header"
    metadata = json.loads(lines[0][2:])
    columns = lines[1].split(",")
    rows = []
    for line in lines[2:]:
        if not line:
            continue
        cells = []
        for cell in line.split(","):
            try:
                cells.append(float(cell))
            except ValueError:
                cells.append(cell)
        rows.append(cells)
    return metadata, columns, rows
