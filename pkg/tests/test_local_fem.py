"""
Per-block P1 kernels.

Proves:
 Group 1 - Reference cell
   1. One unit cell with kappa = 1 reproduces the reference stiffness
   2. Stiffness annihilates constants and does not depend on h
   3. Masses integrate 1 to the block area and perimeter

 Group 2 - Harmonic extension
   4. Constant and linear traces extend to the same functions
   5. With nf = 2 the center value is the mean of its four axial neighbours

 Group 3 - Normal flux
   6. Flux of u = x equals the exact boundary integrals of the trace hats
   7. Interior nodal functions carry no flux; fluxes sum to zero

 Group 4 - Coefficients
   8. kappa_bar >= 1 on every edge, kappa_tilde is the largest edge value
   9. Nonpositive permeability is rejected
"""

import numpy as np
import pytest

from src.discretization.grid import block_topology, build_grid, side_positions
from src.discretization.local_fem import (
    REF_STIFFNESS, block_operators, build_block_operators, edge_kappa_bar, harmonic_extend,
    local_load, local_stiffness, normal_flux, weighted_mass,
)
from src.fields.permeability import PermeabilityField, constant_field


def _block(Nc=2, nf=4, side=1.0, i=0):
    return block_topology(build_grid(Nc, nf, (0.0, 0.0, side, side)), i)


# ── Group 1: reference cell ───────────────────────────────────────────────────

def test_single_cell_stiffness():
    block = block_topology(build_grid(1, 2), 0)
    # Lower-left cell nodes in block numbering
    cell = [0, 1, 3, 4]
    single = local_stiffness(block, np.array([[1.0, 1e-300], [1e-300, 1e-300]])).toarray()
    np.testing.assert_allclose(single[np.ix_(cell, cell)], REF_STIFFNESS, atol=1e-12)
    np.testing.assert_allclose(single, single.T)


def test_stiffness_nullspace_and_scale_invariance():
    small = local_stiffness(_block(side=1.0), np.full((4, 4), 3.0))
    large = local_stiffness(_block(side=10.0), np.full((4, 4), 3.0))
    np.testing.assert_allclose(small @ np.ones(25), 0.0, atol=1e-12)
    np.testing.assert_allclose(small.toarray(), large.toarray())


def test_five_point_stencil():
    A = local_stiffness(_block(nf=2), np.ones((2, 2))).toarray()
    center = A[4]
    np.testing.assert_allclose(center[[1, 3, 5, 7]], -1.0)
    assert center[4] == pytest.approx(4.0)
    np.testing.assert_allclose(center[[0, 2, 6, 8]], 0.0, atol=1e-14)


def test_mass_integrates_area_and_perimeter():
    block = _block(Nc=2, nf=4, side=2.0)
    H = 1.0
    ones = np.ones(block.n_nodes)
    assert ones @ (weighted_mass(block, 1.0, 'block') @ ones) == pytest.approx(H * H)
    assert ones @ (weighted_mass(block, 5.0, 'block') @ ones) == pytest.approx(5.0 * H * H)
    boundary = weighted_mass(block, 2.0, 'boundary')
    assert boundary.sum() == pytest.approx(2.0 * 4 * H)
    assert weighted_mass(block, 1.0, 'interior').shape == (9, 9)
    assert local_load(block, np.ones((4, 4))).sum() == pytest.approx(H * H)


def test_mass_rejects_bad_input():
    block = _block()
    with pytest.raises(ValueError):
        weighted_mass(block, 0.0, 'boundary')
    with pytest.raises(ValueError):
        weighted_mass(block, 1.0, 'edges')


# ── Group 2: harmonic extension ───────────────────────────────────────────────

@pytest.fixture
def unit_block_ops():
    grid = build_grid(2, 6)
    return block_operators(block_topology(grid, 3), constant_field(grid.n_cells))


def test_constant_trace_extends_to_constant(unit_block_ops):
    u = harmonic_extend(unit_block_ops, np.full(unit_block_ops.n_boundary, 2.5))
    np.testing.assert_allclose(u, 2.5)


@pytest.mark.parametrize('axis', [0, 1])
def test_linear_trace_extends_to_linear(unit_block_ops, axis):
    xy = unit_block_ops.topology.node_coordinates()
    linear = 1.0 + 2.0 * xy[:, axis]
    u = harmonic_extend(unit_block_ops, unit_block_ops.trace(linear))
    np.testing.assert_allclose(u, linear, atol=1e-12)


def test_dense_extension_nf2():
    grid = build_grid(1, 2)
    ops = block_operators(block_topology(grid, 0), constant_field(2))
    trace = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
    u = harmonic_extend(ops, trace)
    assert u[4] == pytest.approx(np.mean(u[[1, 3, 5, 7]]))


def test_extension_rejects_wrong_length(unit_block_ops):
    with pytest.raises(ValueError):
        harmonic_extend(unit_block_ops, np.ones(3))


# ── Group 3: normal flux ──────────────────────────────────────────────────────

def test_flux_of_x_matches_boundary_integrals(unit_block_ops):
    nf = unit_block_ops.topology.nf
    h = unit_block_ops.topology.h
    x = unit_block_ops.topology.node_coordinates()[:, 0]
    F = normal_flux(unit_block_ops, x)

    right = side_positions(nf, 'right')
    left = side_positions(nf, 'left')
    bottom = side_positions(nf, 'bottom')
    np.testing.assert_allclose(F[right[1:-1]], h, atol=1e-12)
    np.testing.assert_allclose(F[left[1:-1]], -h, atol=1e-12)
    np.testing.assert_allclose(F[bottom[1:-1]], 0.0, atol=1e-12)
    np.testing.assert_allclose(F[right[[0, -1]]], h / 2, atol=1e-12)


def test_flux_depends_on_trace_only(unit_block_ops, rng):
    n = unit_block_ops.topology.n_nodes
    interior = unit_block_ops.topology.interior_nodes
    bubble = np.zeros(n)
    bubble[interior] = rng.standard_normal(len(interior))
    np.testing.assert_allclose(normal_flux(unit_block_ops, bubble), 0.0, atol=1e-12)

    u = rng.standard_normal(n)
    assert normal_flux(unit_block_ops, u).sum() == pytest.approx(0.0, abs=1e-10)


def test_flux_rejects_wrong_length(unit_block_ops):
    with pytest.raises(ValueError):
        normal_flux(unit_block_ops, np.ones(4))


# ── Group 4: coefficients ─────────────────────────────────────────────────────

def test_kappa_bar_and_tilde(small_grid, channel_kappa):
    operators = build_block_operators(small_grid, channel_kappa)
    kbar = edge_kappa_bar(small_grid, operators)
    assert np.all(kbar >= 1.0)
    for ops in operators:
        edges = [k for k, _ in ops.topology.edges]
        assert ops.kappa_tilde == pytest.approx(max(kbar[k] for k in edges))
        assert ops.kappa_max == pytest.approx(ops.kappa_cells.max())


def test_rejects_nonpositive_kappa():
    block = _block()
    cells = np.ones((4, 4))
    cells[2, 1] = 0.0
    with pytest.raises(ValueError):
        local_stiffness(block, cells)
    with pytest.raises(ValueError):
        block_operators(block, cells)


def test_rejects_mismatched_field(small_grid):
    with pytest.raises(ValueError):
        build_block_operators(small_grid, PermeabilityField(np.ones((5, 5))))
