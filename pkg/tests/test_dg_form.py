"""
Interior penalty DG form.

Proves:
 Group 1 - Structure
   1. a_DG, its consistency and penalty parts are symmetric
   2. Continuous functions have zero jumps; if they vanish on the boundary
      their energy is the broken volume energy
   3. The discrete harmonic x*y is reproduced exactly through weak Dirichlet data

 Group 2 - Norms
   4. The DG norm matches an independent sum over blocks and edges, and
      builds from the grid, permeability and penalty alone
   5. a_norm of an eigenvector is the square root of its eigenvalue
   6. A negative energy raises SolverError

 Group 3 - Bases
   7. Scaling a basis by c scales the projected matrix by c^2
   8. Columns spanning two blocks, bad shapes and empty bases are rejected

 Group 4 - Penalty
   9. gamma <= 0 is rejected
  10. Automatic penalty equals alpha * h * Lambda for constant kappa
"""

import numpy as np
import pytest
import scipy.sparse as sparse

from src.discretization.dg_form import (
    BasisSet, DGSystem, a_norm, assemble_dg_form, assemble_dg_system, auto_penalty, dg_norm,
)
from src.discretization.grid import block_topology, build_grid
from src.discretization.local_fem import build_block_operators, path_mass
from src.exceptions import SolverError
from src.fields.permeability import constant_field
from src.fields.sources import bilinear_boundary
from src.multiscale.solve import solve_fine


def _sample(grid, fn):
    """Nodal values of a global function on every block (continuous DG vector)"""
    u = np.zeros(grid.n_dofs)
    for i in range(grid.n_blocks):
        xy = block_topology(grid, i).node_coordinates()
        u[grid.block_dofs(i)] = fn(xy[:, 0], xy[:, 1])
    return u


# ── Group 1: structure ────────────────────────────────────────────────────────

def test_form_is_symmetric(unit_form):
    for part in (unit_form.matrix, unit_form.consistency, unit_form.penalty, unit_form.volume):
        assert abs(part - part.T).max() < 1e-10


def test_continuous_function_has_no_jumps(unit_form):
    grid = unit_form.grid
    u = _sample(grid, lambda x, y: x * (1 - x) * y * (1 - y))
    for edge in grid.edges:
        np.testing.assert_allclose(unit_form.jump(u, edge), 0.0, atol=1e-14)
    assert unit_form.energy(u) == pytest.approx(float(u @ (unit_form.volume @ u)), rel=1e-10)


def test_weak_dirichlet_reproduces_bilinear():
    grid = build_grid(1, 4)
    form = assemble_dg_form(grid, constant_field(4), 1e3, 0.0, bilinear_boundary)
    u = solve_fine(form).fine
    np.testing.assert_allclose(u, _sample(grid, lambda x, y: x * y), atol=1e-8)


def test_dg_system_matches_projection(small_grid, unit_kappa, unit_form):
    vectors = [(i, np.ones(small_grid.nodes_per_block)) for i in range(small_grid.n_blocks)]
    system = assemble_dg_system(small_grid, unit_kappa, 16.0, vectors, 1.0, bilinear_boundary)
    expected = unit_form.project(BasisSet.from_blocks(small_grid, vectors))
    np.testing.assert_allclose(system.matrix, expected.matrix, atol=1e-10)
    np.testing.assert_allclose(system.rhs, expected.rhs, atol=1e-12)


# ── Group 2: norms ────────────────────────────────────────────────────────────

def test_dg_norm_matches_edge_sum(unit_form, rng):
    grid = unit_form.grid
    u = rng.standard_normal(grid.n_dofs)
    expected = 0.0
    for ops in unit_form.operators:
        ui = u[grid.block_dofs(ops.index)]
        expected += float(ui @ (ops.stiffness @ ui))
    edge_mass = path_mass(grid.nf + 1, grid.h)
    for edge in grid.edges:
        jump = unit_form.jump(u, edge)
        expected += (unit_form.gamma / grid.h) * unit_form.edge_kappa[edge.index] * (jump @ edge_mass @ jump)
    assert unit_form.norm(u) == pytest.approx(np.sqrt(expected), rel=1e-10)


def test_dg_norm_from_grid_and_permeability(small_grid, unit_kappa, unit_operators, unit_form, rng):
    u = rng.standard_normal(small_grid.n_dofs)
    expected = unit_form.norm(u)
    assert dg_norm(small_grid, unit_kappa, 16.0, u) == pytest.approx(expected, rel=1e-12)
    assert dg_norm(small_grid, unit_kappa, 16.0, u, unit_operators) == pytest.approx(expected, rel=1e-12)
    # Only the penalty part depends on gamma
    assert dg_norm(small_grid, unit_kappa, 32.0, u) > expected
    with pytest.raises(ValueError):
        dg_norm(small_grid, unit_kappa, 0.0, u)


def test_a_norm_of_eigenvector(unit_form):
    values, vectors = np.linalg.eigh(unit_form.matrix.toarray())
    assert a_norm(unit_form, vectors[:, -1]) == pytest.approx(np.sqrt(values[-1]), rel=1e-8)


def test_negative_energy_raises():
    system = DGSystem(-np.eye(3), np.zeros(3), 1.0, None)
    with pytest.raises(SolverError):
        a_norm(system, np.ones(3))


# ── Group 3: bases ────────────────────────────────────────────────────────────

def test_basis_scaling(small_grid, unit_form, rng):
    vectors = [(i, rng.standard_normal(small_grid.nodes_per_block)) for i in range(small_grid.n_blocks)]
    base = unit_form.project(BasisSet.from_blocks(small_grid, vectors))
    scaled = unit_form.project(BasisSet.from_blocks(small_grid, [(i, 3.0 * v) for i, v in vectors]))
    np.testing.assert_allclose(scaled.matrix, 9.0 * base.matrix, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(scaled.rhs, 3.0 * base.rhs, rtol=1e-10, atol=1e-12)


def test_from_blocks_tags_and_owners(small_grid):
    n = small_grid.nodes_per_block
    basis = BasisSet.from_blocks(small_grid, [(2, np.ones(n)), (0, np.ones(n))], [1, 2], [0, 5])
    assert basis.size == 2
    assert basis.owners.tolist() == [2, 0]
    assert basis.families.tolist() == [1, 2]
    assert basis.indices.tolist() == [0, 5]
    column = basis.matrix[:, 0].toarray().ravel()
    assert column[small_grid.block_dofs(2)].sum() == pytest.approx(n)
    assert column.sum() == pytest.approx(n)


def test_from_columns_rejects_multi_block(small_grid):
    n = small_grid.nodes_per_block
    column = np.zeros((small_grid.n_dofs, 1))
    column[0, 0] = column[n, 0] = 1.0
    with pytest.raises(ValueError):
        BasisSet.from_columns(small_grid, column)

    single = np.zeros((small_grid.n_dofs, 1))
    single[2 * n + 1, 0] = 1.0
    assert BasisSet.from_columns(small_grid, sparse.csc_matrix(single)).owners.tolist() == [2]


def test_basis_shape_errors(small_grid, unit_form):
    with pytest.raises(ValueError):
        BasisSet.from_blocks(small_grid, [(0, np.ones(3))])
    with pytest.raises(IndexError):
        BasisSet.from_blocks(small_grid, [(9, np.ones(small_grid.nodes_per_block))])
    with pytest.raises(ValueError):
        BasisSet.from_columns(small_grid, np.ones((5, 1)))
    with pytest.raises(ValueError):
        unit_form.project(BasisSet.from_blocks(small_grid, []))
    with pytest.raises(ValueError):
        unit_form.with_load(np.ones(3))


# ── Group 4: penalty ──────────────────────────────────────────────────────────

@pytest.mark.parametrize('gamma', [0.0, -1.0])
def test_rejects_nonpositive_gamma(small_grid, unit_kappa, gamma):
    with pytest.raises(ValueError):
        assemble_dg_form(small_grid, unit_kappa, gamma)


def test_auto_penalty_constant_kappa(small_grid, unit_operators):
    gamma = auto_penalty(small_grid, unit_operators, snapshot_lambda_max=50.0, alpha=2.0)
    assert gamma == pytest.approx(2.0 * small_grid.h * 50.0)


def test_auto_penalty_grows_with_contrast(small_grid, channel_kappa, unit_operators):
    operators = build_block_operators(small_grid, channel_kappa)
    assert auto_penalty(small_grid, operators, 50.0) >= auto_penalty(small_grid, unit_operators, 50.0)
