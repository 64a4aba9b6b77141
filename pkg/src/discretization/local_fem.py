"""
Per-block P1 kernels

Reference unit cell, nodes 0=(0,0) 1=(1,0) 2=(0,1) 3=(1,1), split into the
triangles (0,1,3) and (0,3,2). Stiffness is scale-invariant in 2D; mass and
load scale with h^2.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Sequence, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from ..fields.permeability import PermeabilityField
from ..parallel import block_map
from .grid import Grid, BlockTopology, block_topology

logger = logging.getLogger(__name__)

REF_STIFFNESS = np.array([
    [1.0, -0.5, -0.5, 0.0],
    [-0.5, 1.0, 0.0, -0.5],
    [-0.5, 0.0, 1.0, -0.5],
    [0.0, -0.5, -0.5, 1.0],
])

REF_MASS = np.array([
    [4.0, 1.0, 1.0, 2.0],
    [1.0, 2.0, 0.0, 1.0],
    [1.0, 0.0, 2.0, 1.0],
    [2.0, 1.0, 1.0, 4.0],
]) / 24.0

REF_LOAD = np.array([1.0, 0.5, 0.5, 1.0]) / 3.0

KappaLike = Union[PermeabilityField, np.ndarray]


# ---------------------------------------------------------------------------
# Lattice assembly
# ---------------------------------------------------------------------------

def lattice_cells(nx: int, ny: int) -> np.ndarray:
    """(nx*ny, 4) local node indices per cell, cells ordered [cy, cx] row-major"""
    cx, cy = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = (cy * (nx + 1) + cx).ravel()
    return np.column_stack([n0, n0 + 1, n0 + nx + 1, n0 + nx + 2])


def assemble_lattice(cell_weights: np.ndarray, reference: np.ndarray) -> sparse.csr_matrix:
    """Sum weight_c * reference over the cells of a rectangular lattice"""
    ny, nx = cell_weights.shape
    cells = lattice_cells(nx, ny)
    w = cell_weights.ravel()

    rows = np.repeat(cells, 4, axis=1).ravel()
    cols = np.tile(cells, (1, 4)).ravel()
    data = (w[:, None] * reference.ravel()[None, :]).ravel()

    n = (nx + 1) * (ny + 1)
    matrix = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    return (0.5 * (matrix + matrix.T)).tocsr()


def lattice_load(cell_values: np.ndarray, h: float) -> np.ndarray:
    ny, nx = cell_values.shape
    cells = lattice_cells(nx, ny)
    contributions = (h * h) * cell_values.ravel()[:, None] * REF_LOAD[None, :]
    load = np.zeros((nx + 1) * (ny + 1))
    np.add.at(load, cells.ravel(), contributions.ravel())
    return load


def cyclic_boundary_mass(n_boundary: int, h: float) -> np.ndarray:
    """Unweighted 1D P1 mass around a closed boundary of equal segments h"""
    p = np.arange(n_boundary)
    q = (p + 1) % n_boundary
    mass = np.zeros((n_boundary, n_boundary))
    np.add.at(mass, (p, p), 2.0 * h / 6.0)
    np.add.at(mass, (q, q), 2.0 * h / 6.0)
    np.add.at(mass, (p, q), h / 6.0)
    np.add.at(mass, (q, p), h / 6.0)
    return mass


def path_mass(n_nodes: int, h: float) -> np.ndarray:
    """Unweighted 1D P1 mass along an open edge of n_nodes equally spaced nodes"""
    mass = np.zeros((n_nodes, n_nodes))
    for s in range(n_nodes - 1):
        mass[s:s + 2, s:s + 2] += (h / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])
    return mass


def _block_cells(block: BlockTopology, values: KappaLike) -> np.ndarray:
    if isinstance(values, PermeabilityField):
        cx0, cy0 = block.cell_origin
        return values.block_cells(cx0, cy0, block.nf, block.nf)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (block.nf, block.nf):
        raise ValueError(f"Expected {block.nf}x{block.nf} cell values, got {values.shape}")
    return values


# ---------------------------------------------------------------------------
# Block kernels
# ---------------------------------------------------------------------------

def local_stiffness(block: BlockTopology, kappa: KappaLike) -> sparse.csr_matrix:
    """kappa-weighted P1 stiffness over all block nodes"""
    cells = _block_cells(block, kappa)
    if np.any(cells <= 0):
        raise ValueError(f"Nonpositive permeability in block {block.index}")
    return assemble_lattice(cells, REF_STIFFNESS)


def weighted_mass(block: BlockTopology, weight, region: str = 'interior'):
    """
    Weighted mass matrix of a block

    Args:
        block: Block topology
        weight: Per-cell array (or scalar) for 'block'/'interior', scalar for 'boundary'
        region: 'interior' (interior nodes), 'block' (all nodes) or
            'boundary' (1D trace mass, counterclockwise boundary order)
    """
    if region == 'boundary':
        weight = float(weight)
        if weight <= 0:
            raise ValueError(f"Boundary weight must be positive, got {weight}")
        return weight * cyclic_boundary_mass(4 * block.nf, block.h)

    if np.isscalar(weight):
        cells = np.full((block.nf, block.nf), float(weight))
    else:
        cells = _block_cells(block, weight)
    if np.any(cells <= 0):
        raise ValueError(f"Nonpositive mass weight in block {block.index}")

    mass = assemble_lattice(cells * block.h ** 2, REF_MASS)
    if region == 'block':
        return mass
    if region == 'interior':
        idx = block.interior_nodes
        return mass[idx][:, idx].tocsr()
    raise ValueError(f"Unknown region '{region}'")


def local_load(block: BlockTopology, f: KappaLike) -> np.ndarray:
    """(f, phi_n) for every block node, f constant per fine cell"""
    return lattice_load(_block_cells(block, f), block.h)


@dataclass
class BlockOperators:
    """
    Cached per-block operators

    hext columns are the harmonic extensions of the boundary nodal traces,
    schur = hext^T A hext, flux = M_bdry^{-1} schur maps a boundary trace to
    the nodal flux density on the block boundary.
    """
    topology: BlockTopology
    kappa_cells: np.ndarray
    stiffness: sparse.csr_matrix
    mass: sparse.csr_matrix
    kappa_mass: sparse.csr_matrix
    interior_solver: object
    interior_mass_solver: object
    hext: np.ndarray
    schur: np.ndarray
    boundary_mass: np.ndarray
    flux: np.ndarray
    kappa_max: float
    kappa_tilde: float

    @property
    def index(self) -> int:
        return self.topology.index

    @property
    def n_boundary(self) -> int:
        return len(self.topology.boundary_nodes)

    def trace(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u)[self.topology.boundary_nodes]


def block_operators(block: BlockTopology, kappa: KappaLike) -> BlockOperators:
    """Factor and cache everything later stages need on one block"""
    cells = np.array(_block_cells(block, kappa), dtype=np.float64)
    A = local_stiffness(block, cells)
    b, i = block.boundary_nodes, block.interior_nodes

    A_II = A[i][:, i].tocsc()
    A_IB = A[i][:, b].toarray()
    interior_solver = spla.splu(A_II)

    hext = np.zeros((block.n_nodes, len(b)))
    hext[b, np.arange(len(b))] = 1.0
    hext[i] = -interior_solver.solve(A_IB)

    schur = (A @ hext)[b]
    schur = 0.5 * (schur + schur.T)

    boundary_mass = cyclic_boundary_mass(len(b), block.h)
    flux = la.cho_solve(la.cho_factor(boundary_mass), schur)

    mass = weighted_mass(block, 1.0, 'block')
    kappa_mass = weighted_mass(block, cells, 'block')
    interior_mass_solver = spla.splu(kappa_mass[i][:, i].tocsc())

    kappa_max = float(cells.max())
    return BlockOperators(
        topology=block,
        kappa_cells=cells,
        stiffness=A,
        mass=mass,
        kappa_mass=kappa_mass,
        interior_solver=interior_solver,
        interior_mass_solver=interior_mass_solver,
        hext=hext,
        schur=schur,
        boundary_mass=boundary_mass,
        flux=flux,
        kappa_max=kappa_max,
        kappa_tilde=kappa_max,
    )


def edge_kappa_bar(grid: Grid, operators: Sequence[BlockOperators]) -> np.ndarray:
    """kappa_bar per coarse edge: mean of adjacent block maxima, kappa_K on the boundary"""
    values = np.empty(len(grid.edges))
    for e in grid.edges:
        if e.is_boundary:
            values[e.index] = operators[e.plus].kappa_max
        else:
            values[e.index] = 0.5 * (operators[e.plus].kappa_max + operators[e.minus].kappa_max)
    return values


def build_block_operators(grid: Grid, kappa: PermeabilityField) -> List[BlockOperators]:
    """Operators for every block, with kappa_tilde set from the edge averages"""
    if kappa.shape != (grid.n_cells, grid.n_cells):
        raise ValueError(f"Permeability shape {kappa.shape} does not match grid "
                         f"({grid.n_cells}, {grid.n_cells})")

    topologies = [block_topology(grid, i) for i in range(grid.n_blocks)]
    operators = block_map(lambda t: block_operators(t, kappa), topologies)

    kbar = edge_kappa_bar(grid, operators)
    updated = []
    for ops in operators:
        tilde = max(kbar[k] for k, _ in ops.topology.edges)
        updated.append(replace(ops, kappa_tilde=float(tilde)))

    logger.info(f"Built operators for {grid.n_blocks} blocks "
                f"({grid.nodes_per_block} nodes, {4 * grid.nf} boundary nodes each)")
    return updated


def harmonic_extend(ops: BlockOperators, trace: np.ndarray) -> np.ndarray:
    """Discrete kappa-harmonic function on the block with the given boundary values"""
    trace = np.asarray(trace, dtype=np.float64)
    if trace.shape[0] != ops.n_boundary:
        raise ValueError(f"Trace has {trace.shape[0]} values, block boundary has {ops.n_boundary}")
    return ops.hext @ trace


def normal_flux(ops: BlockOperators, u: np.ndarray) -> np.ndarray:
    """
    Variational normal flux as a boundary functional

    F_k = a_K(u, psi_k) with psi_k the harmonic extension of the k-th boundary
    nodal trace. Only the trace of u contributes.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape[0] != ops.topology.n_nodes:
        raise ValueError(f"Expected {ops.topology.n_nodes} block coefficients, got {u.shape[0]}")
    return ops.hext.T @ (ops.stiffness @ u)
