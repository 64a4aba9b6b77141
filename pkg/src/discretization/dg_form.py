"""
Interior penalty DG form

a_DG(u, v) = sum_K a_K(u, v)
             - sum_E int_E ({kappa grad u . n} [v] + {kappa grad v . n} [u])
             + sum_E (gamma / h) int_E kappa_bar [u] [v]

[u] = u+ - u- and {q} = (q+ + q-)/2 across interior edges, [u] = u and
{q} = q on the domain boundary. Normal fluxes are the variational fluxes of
local_fem. Dirichlet data enters weakly (symmetric Nitsche).
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sparse

from ..exceptions import SolverError
from ..fields.permeability import PermeabilityField
from ..parallel import block_map
from .grid import CoarseEdge, Grid, side_positions
from .local_fem import BlockOperators, build_block_operators, edge_kappa_bar, local_load, path_mass

logger = logging.getLogger(__name__)

DEFAULT_PENALTY = 16.0

BoundaryFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BasisSet:
    """
    Columns of fine DG coefficient vectors, each supported on a single block

    families/indices tag offline eigenfunctions (family 1 or 2, 0-based
    eigen-index); untagged columns carry family 0 and index -1.
    """
    matrix: sparse.csc_matrix
    owners: np.ndarray
    families: np.ndarray
    indices: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def from_blocks(cls, grid: Grid, vectors: Sequence[Tuple[int, np.ndarray]],
                    families: Optional[Sequence[int]] = None,
                    indices: Optional[Sequence[int]] = None) -> 'BasisSet':
        """Place block-local vectors at their blocks' global offsets"""
        n = grid.nodes_per_block
        rows, cols, data, owners = [], [], [], []
        for col, (block, vec) in enumerate(vectors):
            if not 0 <= block < grid.n_blocks:
                raise IndexError(f"Block index {block} out of range")
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (n,):
                raise ValueError(f"Basis vector {col} has shape {vec.shape}, expected ({n},)")
            nz = np.flatnonzero(vec)
            rows.append(block * n + nz)
            cols.append(np.full(nz.size, col))
            data.append(vec[nz])
            owners.append(block)

        count = len(owners)
        matrix = sparse.csc_matrix(
            (np.concatenate(data) if data else np.zeros(0),
             (np.concatenate(rows) if rows else np.zeros(0, int),
              np.concatenate(cols) if cols else np.zeros(0, int))),
            shape=(grid.n_dofs, count),
        )
        return cls(
            matrix=matrix,
            owners=np.asarray(owners, dtype=int),
            families=np.asarray(families if families is not None else [0] * count, dtype=int),
            indices=np.asarray(indices if indices is not None else [-1] * count, dtype=int),
        )

    @classmethod
    def from_columns(cls, grid: Grid, columns) -> 'BasisSet':
        """Wrap global fine vectors, rejecting any column that spans several blocks"""
        matrix = sparse.csc_matrix(columns)
        if matrix.shape[0] != grid.n_dofs:
            raise ValueError(f"Basis rows {matrix.shape[0]} != fine DOF count {grid.n_dofs}")
        n = grid.nodes_per_block
        owners = np.zeros(matrix.shape[1], dtype=int)
        for col in range(matrix.shape[1]):
            rows = matrix.indices[matrix.indptr[col]:matrix.indptr[col + 1]]
            blocks = np.unique(rows // n)
            if len(blocks) > 1:
                raise ValueError(f"Basis vector {col} spans blocks {blocks.tolist()}")
            owners[col] = blocks[0] if len(blocks) else 0
        count = matrix.shape[1]
        return cls(matrix, owners, np.zeros(count, dtype=int), np.full(count, -1))


@dataclass
class DGSystem:
    """a_DG and the right-hand side in a given basis"""
    matrix: np.ndarray
    rhs: np.ndarray
    gamma: float
    basis: BasisSet

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass
class EdgeCoupling:
    """Local edge operators on the boundary DOFs of the adjacent blocks"""
    edge: CoarseEdge
    dofs: np.ndarray
    jump: np.ndarray
    average_flux: np.ndarray
    edge_mass: np.ndarray
    kappa_bar: float

    def matrices(self, gamma: float, h: float) -> Tuple[np.ndarray, np.ndarray]:
        """(consistency, penalty) local matrices"""
        JM = self.jump.T @ self.edge_mass
        consistency = -(JM @ self.average_flux + (JM @ self.average_flux).T)
        penalty = (gamma / h) * self.kappa_bar * (JM @ self.jump)
        return consistency, penalty


@dataclass
class DGForm:
    """
    a_DG assembled on the full fine DG space

    matrix = volume + consistency + penalty, all symmetric. mass is the
    unweighted L2 mass, load the right-hand side (f, v) plus Dirichlet terms.
    """
    grid: Grid
    gamma: float
    operators: List[BlockOperators] = field(repr=False)
    edge_kappa: np.ndarray = field(repr=False)
    volume: sparse.csr_matrix = field(repr=False)
    consistency: sparse.csr_matrix = field(repr=False)
    penalty: sparse.csr_matrix = field(repr=False)
    mass: sparse.csr_matrix = field(repr=False)
    load: np.ndarray = field(repr=False)
    matrix: sparse.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        matrix = (self.volume + self.consistency + self.penalty).tocsr()
        self.matrix = (0.5 * (matrix + matrix.T)).tocsr()

    def with_load(self, load: np.ndarray) -> 'DGForm':
        load = np.asarray(load, dtype=np.float64)
        if load.shape != (self.grid.n_dofs,):
            raise ValueError(f"Load has shape {load.shape}, expected ({self.grid.n_dofs},)")
        return replace(self, load=load)

    def coupling(self, edge: CoarseEdge) -> EdgeCoupling:
        return edge_coupling(self.grid, self.operators, self.edge_kappa, edge)

    def energy(self, u: np.ndarray) -> float:
        return float(u @ (self.matrix @ u))

    def norm(self, u: np.ndarray) -> float:
        """||u||_DG^2 = a_H(u, u) + sum_E (gamma/h) int_E kappa_bar [u]^2"""
        u = np.asarray(u, dtype=np.float64)
        value = float(u @ (self.volume @ u) + u @ (self.penalty @ u))
        return float(np.sqrt(max(value, 0.0)))

    def project(self, basis: BasisSet) -> DGSystem:
        """Galerkin restriction of a_DG and the load to a basis"""
        if basis.size == 0:
            raise ValueError("Cannot project onto an empty basis")
        B = basis.matrix
        K = (B.T @ (self.matrix @ B))
        K = K.toarray() if sparse.issparse(K) else np.asarray(K)
        K = 0.5 * (K + K.T)
        rhs = np.asarray(B.T @ self.load).ravel()
        return DGSystem(K, rhs, self.gamma, basis)

    def jump(self, u: np.ndarray, edge: CoarseEdge) -> np.ndarray:
        """Nodal jump u+ - u- along an edge (u+ on the boundary)"""
        n = self.grid.nodes_per_block
        plus = u[edge.plus * n + self._side_nodes(edge.plus_side)]
        if edge.is_boundary:
            return plus
        return plus - u[edge.minus * n + self._side_nodes(edge.minus_side)]

    def _side_nodes(self, side: str) -> np.ndarray:
        return self.operators[0].topology.side_nodes[side]


def edge_coupling(grid: Grid, operators: Sequence[BlockOperators],
                  edge_kappa: np.ndarray, edge: CoarseEdge) -> EdgeCoupling:
    nf = grid.nf
    n_b = 4 * nf
    n = grid.nodes_per_block

    plus = operators[edge.plus]
    pos_plus = side_positions(nf, edge.plus_side)
    jump_plus = np.zeros((nf + 1, n_b))
    jump_plus[np.arange(nf + 1), pos_plus] = 1.0
    flux_plus = plus.flux[pos_plus]
    dofs_plus = edge.plus * n + plus.topology.boundary_nodes

    if edge.is_boundary:
        jump, average, dofs = jump_plus, flux_plus, dofs_plus
    else:
        minus = operators[edge.minus]
        pos_minus = side_positions(nf, edge.minus_side)
        jump_minus = np.zeros((nf + 1, n_b))
        jump_minus[np.arange(nf + 1), pos_minus] = 1.0
        # Outward normal of K- is -n_E, so its flux enters with a minus sign
        flux_minus = minus.flux[pos_minus]
        jump = np.hstack([jump_plus, -jump_minus])
        average = 0.5 * np.hstack([flux_plus, -flux_minus])
        dofs = np.concatenate([dofs_plus, edge.minus * n + minus.topology.boundary_nodes])

    return EdgeCoupling(edge, dofs, jump, average, path_mass(nf + 1, grid.h),
                        float(edge_kappa[edge.index]))


def _scatter(dofs: np.ndarray, local: np.ndarray):
    rows = np.repeat(dofs, len(dofs))
    cols = np.tile(dofs, len(dofs))
    data = local.ravel()
    keep = data != 0.0
    return rows[keep], cols[keep], data[keep]


def _as_cells(values, grid: Grid) -> np.ndarray:
    if values is None:
        return np.zeros((grid.n_cells, grid.n_cells))
    if isinstance(values, PermeabilityField):
        return values.values
    if np.isscalar(values):
        return np.full((grid.n_cells, grid.n_cells), float(values))
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (grid.n_cells, grid.n_cells):
        raise ValueError(f"Cell field shape {values.shape} does not match grid "
                         f"({grid.n_cells}, {grid.n_cells})")
    return values


def assemble_dg_form(grid: Grid, kappa: PermeabilityField, gamma: float,
                     f=None, g: Optional[BoundaryFunction] = None,
                     operators: Optional[List[BlockOperators]] = None) -> DGForm:
    """
    Assemble a_DG and the load on the full fine DG space

    Args:
        grid: Coarse/fine grid
        kappa: Permeability per fine cell
        gamma: Penalty parameter (> 0)
        f: Source per fine cell (array, scalar or None for zero)
        g: Dirichlet data g(x, y), vectorized; None for zero
        operators: Pre-built block operators to reuse
    """
    if not gamma > 0:
        raise ValueError(f"Penalty gamma must be positive, got {gamma}")
    if operators is None:
        operators = build_block_operators(grid, kappa)

    f_cells = _as_cells(f, grid)
    n = grid.nodes_per_block
    kbar = edge_kappa_bar(grid, operators)

    volume = sparse.block_diag([ops.stiffness for ops in operators], format='csr')
    mass = sparse.block_diag([ops.mass for ops in operators], format='csr')

    load = np.zeros(grid.n_dofs)
    for ops in operators:
        cx0, cy0 = ops.topology.cell_origin
        load[ops.index * n:(ops.index + 1) * n] = local_load(
            ops.topology, f_cells[cy0:cy0 + grid.nf, cx0:cx0 + grid.nf])

    def edge_terms(edge):
        coupling = edge_coupling(grid, operators, kbar, edge)
        consistency, penalty = coupling.matrices(gamma, grid.h)
        rhs = None
        if edge.is_boundary and g is not None:
            pts = grid.edge_points(edge)
            g_e = np.asarray(g(pts[:, 0], pts[:, 1]), dtype=np.float64)
            Mg = coupling.edge_mass @ g_e
            rhs = (-(coupling.average_flux.T @ Mg)
                   + (gamma / grid.h) * coupling.kappa_bar * (coupling.jump.T @ Mg))
        return coupling.dofs, _scatter(coupling.dofs, consistency), _scatter(coupling.dofs, penalty), rhs

    results = block_map(edge_terms, grid.edges)

    c_parts, p_parts = [], []
    for dofs, c_part, p_part, rhs in results:
        c_parts.append(c_part)
        p_parts.append(p_part)
        if rhs is not None:
            np.add.at(load, dofs, rhs)

    def gather(parts):
        rows = np.concatenate([p[0] for p in parts])
        cols = np.concatenate([p[1] for p in parts])
        data = np.concatenate([p[2] for p in parts])
        m = sparse.coo_matrix((data, (rows, cols)), shape=(grid.n_dofs, grid.n_dofs)).tocsr()
        return (0.5 * (m + m.T)).tocsr()

    form = DGForm(grid, float(gamma), list(operators), kbar, volume, gather(c_parts),
                  gather(p_parts), mass, load)
    logger.info(f"Assembled a_DG on {grid.n_dofs} fine DOFs, {len(grid.edges)} edges, "
                f"gamma={gamma:g}")
    return form


def assemble_dg_system(grid: Grid, kappa: PermeabilityField, gamma: float,
                       basis: Union[BasisSet, Sequence[Tuple[int, np.ndarray]]],
                       f=None, g: Optional[BoundaryFunction] = None,
                       operators: Optional[List[BlockOperators]] = None) -> DGSystem:
    """a_DG and right-hand side in a basis of single-block fine vectors"""
    if not isinstance(basis, BasisSet):
        basis = BasisSet.from_blocks(grid, basis)
    form = assemble_dg_form(grid, kappa, gamma, f, g, operators)
    return form.project(basis)


def dg_norm(grid: Grid, kappa: PermeabilityField, gamma: float, u: np.ndarray,
            operators: Optional[List[BlockOperators]] = None) -> float:
    """DG norm of a fine vector; pass operators to reuse an existing assembly"""
    return assemble_dg_form(grid, kappa, gamma, operators=operators).norm(u)


def a_norm(system: Union[DGSystem, DGForm], coefficients: np.ndarray) -> float:
    """sqrt(c^T S c); a clearly negative form means gamma is below coercivity"""
    c = np.asarray(coefficients, dtype=np.float64)
    value = float(c @ (system.matrix @ c))
    scale = float(abs(c) @ (abs(system.matrix) @ abs(c)))
    if value < -1e-12 * max(scale, np.finfo(float).tiny):
        raise SolverError(f"Negative energy {value:.3e}: penalty gamma={system.gamma:g} "
                          f"is below the coercivity threshold")
    return float(np.sqrt(max(value, 0.0)))


def auto_penalty(grid: Grid, operators: Sequence[BlockOperators],
                 snapshot_lambda_max: float, alpha: float = 2.0) -> float:
    """
    gamma = alpha * C_kappa * h * max_K Lambda_K

    C_kappa is the largest ratio max/min of kappa_bar over the edges of one block.
    """
    kbar = edge_kappa_bar(grid, operators)
    c_kappa = 1.0
    for ops in operators:
        values = [kbar[k] for k, _ in ops.topology.edges]
        c_kappa = max(c_kappa, max(values) / min(values))
    gamma = alpha * c_kappa * grid.h * snapshot_lambda_max
    logger.info(f"Auto penalty: C_kappa={c_kappa:.3g}, Lambda={snapshot_lambda_max:.4g}, "
                f"gamma={gamma:.4g}")
    return float(gamma)
