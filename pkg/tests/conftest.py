"""
Shared fixtures: small grids, fields and a ready-made problem context
"""

import os
import sys

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, _ROOT)

import numpy as np
import pytest

from src.adaptivity.adaptive import ProblemContext
from src.discretization.dg_form import assemble_dg_form
from src.discretization.grid import build_grid
from src.discretization.local_fem import build_block_operators
from src.fields.permeability import channels_field, constant_field
from src.fields.sources import bilinear_boundary
from src.multiscale.spectral import compute_block_spectra


@pytest.fixture(autouse=True)
def _serial_workers(monkeypatch):
    monkeypatch.delenv('GMSDG_THREADS', raising=False)
    monkeypatch.delenv('GMSDG_OUT', raising=False)


@pytest.fixture
def small_grid():
    return build_grid(2, 4)


@pytest.fixture
def unit_kappa(small_grid):
    return constant_field(small_grid.n_cells)


@pytest.fixture
def channel_kappa(small_grid):
    return channels_field(small_grid.n_cells, contrast=1e4, seed=3, count=4, width=1)


@pytest.fixture
def unit_operators(small_grid, unit_kappa):
    return build_block_operators(small_grid, unit_kappa)


@pytest.fixture
def unit_form(small_grid, unit_kappa, unit_operators):
    return assemble_dg_form(small_grid, unit_kappa, 16.0, 1.0, bilinear_boundary, unit_operators)


@pytest.fixture
def unit_spectra(small_grid, unit_kappa, unit_operators):
    return compute_block_spectra(small_grid, unit_kappa, unit_operators)


@pytest.fixture
def channel_problem(small_grid, channel_kappa):
    return ProblemContext.build(small_grid, channel_kappa, f=1.0, g=bilinear_boundary,
                                snapshot_reference=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
