"""
Snapshot spaces.

Proves:
 Group 1 - Plain snapshots
   1. Type-1 snapshots have one column per boundary node with a nodal trace
   2. Type-2 snapshots vanish on the block boundary
   3. Harmonic/interior split reconstructs the input

 Group 2 - Oversampling
   4. Regions are clipped at the domain and halo < 1 is rejected
   5. Oversampled snapshots are harmonic in the block with orthonormal traces
   6. POD values descend and n_pod is clamped with a warning
   7. Domain-boundary runs of the region enter as a few smooth modes

 Group 3 - Orthonormalization
   8. W^T G W = I and null directions are dropped
"""

import logging

import numpy as np
import pytest

from src.discretization.grid import build_grid
from src.discretization.local_fem import build_block_operators
from src.multiscale.snapshots import (
    DOMAIN_TRACE_MODES, HARMONIC, INTERIOR, OVERSAMPLED, build_oversampled_snapshots,
    build_snapshot1, build_snapshot2, orthonormalize, oversampling_region, region_trace_inputs,
    smooth_trace_modes, split_harmonic_interior,
)


@pytest.fixture
def channel_operators(small_grid, channel_kappa):
    return build_block_operators(small_grid, channel_kappa)


# ── Group 1: plain snapshots ──────────────────────────────────────────────────

def test_snapshot1_traces(channel_operators):
    ops = channel_operators[1]
    space = build_snapshot1(ops)
    assert space.kind == HARMONIC
    assert space.size == ops.n_boundary == 16
    np.testing.assert_allclose(space.basis[ops.topology.boundary_nodes], np.eye(16))


def test_snapshot2_vanishes_on_boundary(channel_operators):
    ops = channel_operators[2]
    space = build_snapshot2(ops)
    assert space.kind == INTERIOR
    assert space.size == 9
    np.testing.assert_array_equal(space.basis[ops.topology.boundary_nodes], 0.0)


def test_split_reconstructs(channel_operators, rng):
    ops = channel_operators[3]
    u = rng.standard_normal(ops.topology.n_nodes)
    u1, u2 = split_harmonic_interior(ops, u)
    np.testing.assert_allclose(u1 + u2, u)
    np.testing.assert_allclose(u2[ops.topology.boundary_nodes], 0.0, atol=1e-14)
    interior = ops.topology.interior_nodes
    np.testing.assert_allclose((ops.stiffness @ u1)[interior], 0.0, atol=1e-8)


# ── Group 2: oversampling ─────────────────────────────────────────────────────

def test_oversampling_region_clipping():
    grid = build_grid(4, 2)
    assert oversampling_region(grid, 0) == (0, 0, 1, 1)
    assert oversampling_region(grid, grid.block_index(2, 2)) == (1, 1, 3, 3)
    assert oversampling_region(grid, grid.block_index(3, 3), halo=2) == (1, 1, 3, 3)
    with pytest.raises(ValueError):
        oversampling_region(grid, 0, halo=0)


def test_oversampled_snapshots_are_harmonic(small_grid, channel_kappa, channel_operators):
    ops = channel_operators[0]
    space = build_oversampled_snapshots(small_grid, channel_kappa, ops, halo=1, n_pod=10)
    assert space.kind == OVERSAMPLED
    assert 0 < space.size <= 10

    interior = ops.topology.interior_nodes
    residual = (ops.stiffness @ space.basis)[interior]
    assert np.abs(residual).max() < 1e-6 * max(1.0, np.abs(ops.stiffness).max())

    traces = space.basis[ops.topology.boundary_nodes]
    np.testing.assert_allclose(traces.T @ ops.boundary_mass @ traces, np.eye(space.size), atol=1e-8)


def test_pod_values_descend_and_clamp(small_grid, channel_kappa, channel_operators, caplog):
    with caplog.at_level(logging.WARNING):
        space = build_oversampled_snapshots(small_grid, channel_kappa, channel_operators[0],
                                            halo=1, n_pod=500)
    assert 'clamping' in caplog.text
    # The 2x2 grid makes the region the whole domain, a single closed run
    assert len(space.pod_values) == DOMAIN_TRACE_MODES
    assert np.all(np.diff(space.pod_values) <= 1e-12)


def test_domain_runs_become_smooth_modes():
    on_domain = np.zeros(16, dtype=bool)
    on_domain[3:11] = True
    inputs = region_trace_inputs(on_domain)
    assert inputs.shape == (16, 8 + DOMAIN_TRACE_MODES)

    deltas, smooth = inputs[:, :8], inputs[:, 8:]
    np.testing.assert_array_equal(deltas[on_domain], 0.0)
    np.testing.assert_array_equal(deltas[~on_domain], np.eye(8))
    np.testing.assert_array_equal(smooth[~on_domain], 0.0)
    assert np.ptp(smooth[on_domain, 0]) < 1e-12
    np.testing.assert_allclose(smooth.T @ smooth, np.eye(DOMAIN_TRACE_MODES), atol=1e-12)


def test_domain_run_wraps_around_the_loop():
    on_domain = np.zeros(12, dtype=bool)
    on_domain[[10, 11, 0, 1]] = True
    inputs = region_trace_inputs(on_domain)
    # One run of four nodes: four modes, not two runs of two
    assert inputs.shape == (12, 8 + 4)
    np.testing.assert_allclose(np.abs(inputs[on_domain, 8]), 0.5)


def test_closed_loop_modes_are_low_frequency():
    modes = smooth_trace_modes(24, 5, closed=True)
    np.testing.assert_allclose(modes.T @ modes, np.eye(5), atol=1e-12)
    assert np.ptp(np.abs(modes[:, 0])) < 1e-12
    # Second differences of the lowest cycle modes stay small
    curvature = np.roll(modes, 1, axis=0) - 2 * modes + np.roll(modes, -1, axis=0)
    assert np.abs(curvature).max() < 0.1


# ── Group 3: orthonormalization ───────────────────────────────────────────────

def test_orthonormalize_drops_null_directions(rng):
    X = rng.standard_normal((6, 3))
    gram = X @ X.T
    W = orthonormalize(gram)
    assert W.shape == (6, 3)
    np.testing.assert_allclose(W.T @ gram @ W, np.eye(3), atol=1e-10)
