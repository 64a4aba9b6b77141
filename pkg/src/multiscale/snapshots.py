"""
Snapshot spaces

Type 1: harmonic extensions of boundary nodal traces, optionally built from
oversampled regions compressed by POD. Type 2: interior nodal functions.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from ..discretization.grid import Grid, lattice_boundary, lattice_interior
from ..discretization.local_fem import (
    BlockOperators, REF_MASS, REF_STIFFNESS, assemble_lattice, cyclic_boundary_mass,
)
from ..fields.permeability import PermeabilityField

logger = logging.getLogger(__name__)

HARMONIC = 'harmonic'
INTERIOR = 'interior'
OVERSAMPLED = 'oversampled'

DROP_TOLERANCE = 1e-12
OVERSAMPLED_TRACE_TOLERANCE = 1e-8
DOMAIN_TRACE_MODES = 5


@dataclass(frozen=True)
class SnapshotSpace:
    """Columns are fine coefficient vectors on one block"""
    block: int
    kind: str
    basis: np.ndarray
    pod_values: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.basis.shape[1]


def orthonormalize(gram: np.ndarray, tol: float = DROP_TOLERANCE) -> np.ndarray:
    """
    Transform W with W^T gram W = I on the numerically nonsingular part

    Directions with eigenvalue below tol * max eigenvalue are dropped.
    """
    w, V = la.eigh(0.5 * (gram + gram.T))
    top = w.max() if w.size else 0.0
    keep = w > tol * top
    return V[:, keep] / np.sqrt(w[keep])


def build_snapshot1(ops: BlockOperators) -> SnapshotSpace:
    """One harmonic extension per boundary node; column k has trace delta_k"""
    return SnapshotSpace(ops.index, HARMONIC, ops.hext.copy())


def build_snapshot2(ops: BlockOperators) -> SnapshotSpace:
    """Interior nodal functions, all vanishing on the block boundary"""
    interior = ops.topology.interior_nodes
    basis = np.zeros((ops.topology.n_nodes, len(interior)))
    basis[interior, np.arange(len(interior))] = 1.0
    return SnapshotSpace(ops.index, INTERIOR, basis)


def oversampling_region(grid: Grid, block: int, halo: int = 1) -> Tuple[int, int, int, int]:
    """Block range (bx0, by0, bx1, by1) inclusive, clipped to the domain"""
    if halo < 1:
        raise ValueError(f"halo must be >= 1, got {halo}")
    bx, by = grid.block_coords(block)
    return (max(0, bx - halo), max(0, by - halo),
            min(grid.Nc - 1, bx + halo), min(grid.Nc - 1, by + halo))


def _on_domain_boundary(grid: Grid, region: Tuple[int, int, int, int], nx: int, ny: int,
                        nodes: np.ndarray) -> np.ndarray:
    bx0, by0, bx1, by1 = region
    ix, iy = nodes % (nx + 1), nodes // (nx + 1)
    last = grid.Nc - 1
    return (((ix == 0) & (bx0 == 0)) | ((ix == nx) & (bx1 == last))
            | ((iy == 0) & (by0 == 0)) | ((iy == ny) & (by1 == last)))


def _cyclic_runs(mask: np.ndarray) -> List[np.ndarray]:
    """Maximal runs of True positions along a closed loop, partial loops only"""
    start = int(np.flatnonzero(~mask)[0])
    runs, current = [], []
    for p in (start + np.arange(len(mask))) % len(mask):
        if mask[p]:
            current.append(p)
        elif current:
            runs.append(np.array(current))
            current = []
    if current:
        runs.append(np.array(current))
    return runs


def smooth_trace_modes(n_nodes: int, count: int, closed: bool = False) -> np.ndarray:
    """Lowest eigenvectors of the path (closed: cycle) graph Laplacian, free ends"""
    count = min(count, n_nodes)
    L = 2.0 * np.eye(n_nodes) - np.eye(n_nodes, k=1) - np.eye(n_nodes, k=-1)
    if closed and n_nodes > 2:
        L[0, -1] = L[-1, 0] = -1.0
    else:
        L[0, 0] = L[-1, -1] = 1.0
    _, vectors = la.eigh(L, subset_by_index=[0, count - 1])
    return vectors


def region_trace_inputs(on_domain: np.ndarray, modes: int = DOMAIN_TRACE_MODES) -> np.ndarray:
    """
    Boundary data driving the oversampled extensions, one column each

    Nodes inside the domain get nodal deltas. Every run of nodes on the
    domain boundary gets its lowest `modes` smooth modes instead.
    """
    n = len(on_domain)
    free = np.flatnonzero(~on_domain)
    deltas = np.zeros((n, len(free)))
    deltas[free, np.arange(len(free))] = 1.0
    columns = [deltas]

    if on_domain.all():
        runs = [(np.arange(n), True)]
    elif on_domain.any():
        runs = [(run, False) for run in _cyclic_runs(on_domain)]
    else:
        runs = []
    for run, closed in runs:
        smooth = np.zeros((n, min(modes, len(run))))
        smooth[run] = smooth_trace_modes(len(run), modes, closed)
        columns.append(smooth)
    return np.hstack(columns)


def build_oversampled_snapshots(grid: Grid, kappa: PermeabilityField, ops: BlockOperators,
                                halo: int = 1, n_pod: int = 40) -> SnapshotSpace:
    """
    Oversampled type-1 snapshots for one block

    Harmonic extensions are solved on the enlarged region for every nodal
    trace of its boundary, compressed by POD (L2 on the block against the
    region boundary mass, largest eigenvalues kept), and their traces on the
    block boundary are harmonically re-extended inside the block.

    Where the region is clipped at the domain, the boundary data there is
    limited to a few smooth modes per side run, since Dirichlet data enters
    weakly. Block traces below OVERSAMPLED_TRACE_TOLERANCE of the strongest
    are treated as linearly dependent and dropped.
    """
    nf = grid.nf
    region = oversampling_region(grid, ops.index, halo)
    bx0, by0, bx1, by1 = region
    nx, ny = (bx1 - bx0 + 1) * nf, (by1 - by0 + 1) * nf
    cells = kappa.block_cells(bx0 * nf, by0 * nf, nx, ny)

    A = assemble_lattice(cells, REF_STIFFNESS)
    bnd, inner = lattice_boundary(nx, ny), lattice_interior(nx, ny)
    inputs = region_trace_inputs(_on_domain_boundary(grid, region, nx, ny, bnd))
    n_inputs = inputs.shape[1]

    if n_pod > n_inputs:
        logger.warning(f"Block {ops.index}: n_pod={n_pod} exceeds {n_inputs} "
                       f"oversampled traces, clamping")
        n_pod = n_inputs

    extensions = np.zeros(((nx + 1) * (ny + 1), n_inputs))
    extensions[bnd] = inputs
    if len(inner):
        solver = spla.splu(A[inner][:, inner].tocsc())
        extensions[inner] = -solver.solve(np.asarray(A[inner][:, bnd] @ inputs))

    # Block nodes inside the region lattice
    bx, by = grid.block_coords(ops.index)
    ox, oy = (bx - bx0) * nf, (by - by0) * nf
    ix, iy = np.meshgrid(np.arange(nf + 1), np.arange(nf + 1))
    block_nodes = ((oy + iy) * (nx + 1) + (ox + ix)).ravel()
    psi = extensions[block_nodes]

    block_l2 = assemble_lattice(np.full((nf, nf), grid.h ** 2), REF_MASS)
    lhs = psi.T @ (block_l2 @ psi)
    rhs = inputs.T @ cyclic_boundary_mass(len(bnd), grid.h) @ inputs
    values, vectors = la.eigh(0.5 * (lhs + lhs.T), 0.5 * (rhs + rhs.T))

    order = np.argsort(values)[::-1][:n_pod]
    pod_values = values[order]
    selected = psi @ vectors[:, order]

    traces = selected[ops.topology.boundary_nodes]
    W = orthonormalize(traces.T @ ops.boundary_mass @ traces, OVERSAMPLED_TRACE_TOLERANCE)
    if W.shape[1] < traces.shape[1]:
        logger.debug(f"Block {ops.index}: dropped {traces.shape[1] - W.shape[1]} "
                     f"dependent oversampled traces")
    basis = ops.hext @ (traces @ W)

    tail = float(np.sum(np.clip(values[np.argsort(values)[::-1][n_pod:]], 0.0, None)))
    logger.debug(f"Block {ops.index}: POD kept {n_pod} of {n_inputs}, tail {tail:.3e}")
    return SnapshotSpace(ops.index, OVERSAMPLED, basis, pod_values)


def split_harmonic_interior(ops: BlockOperators, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(harmonic part, interior part) with u = u1 + u2 and u2 = 0 on the block boundary"""
    u = np.asarray(u, dtype=np.float64)
    u1 = ops.hext @ ops.trace(u)
    return u1, u - u1
