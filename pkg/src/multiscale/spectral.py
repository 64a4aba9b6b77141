"""
Local spectral problems and offline spaces

Family 1 (harmonic snapshots):  A phi = (lambda / H) M_bdry(kappa_tilde) phi
Family 2 (interior functions):  A_II xi = (lambda / H^2) M_II(kappa) xi

Eigenvalues ascend, eigenfunctions are unit in the respective weighted mass
and signed so that their largest-magnitude coefficient is positive.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la

from ..discretization.dg_form import BasisSet, DGForm
from ..discretization.grid import Grid
from ..discretization.local_fem import BlockOperators
from ..fields.permeability import PermeabilityField
from ..parallel import block_map
from .snapshots import (
    SnapshotSpace, build_oversampled_snapshots, build_snapshot1, orthonormalize,
)

logger = logging.getLogger(__name__)

DEFAULT_M_MAX = 64


@dataclass(frozen=True)
class EigenData:
    """
    Eigenpairs of one block and family

    coefficients are snapshot-space columns, functions the matching fine
    block vectors. mass_transform (family 1) maps snapshot coordinates to an
    orthonormal basis of the trace mass, used for exact dual norms.
    """
    block: int
    family: int
    eigenvalues: np.ndarray
    coefficients: np.ndarray
    functions: np.ndarray
    normalization: str
    mass_transform: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1]) if self.size else 0.0


@dataclass(frozen=True)
class BlockSpectra:
    """Operators, type-1 snapshots and both eigen-families of one block"""
    operators: BlockOperators
    snapshot1: SnapshotSpace
    eig1: EigenData
    eig2: Optional[EigenData]

    @property
    def index(self) -> int:
        return self.operators.index

    def family(self, j: int) -> Optional[EigenData]:
        if j == 1:
            return self.eig1
        if j == 2:
            return self.eig2
        raise ValueError(f"Unknown family {j}")

    def spectrum_size(self, j: int) -> int:
        data = self.family(j)
        return data.size if data is not None else 0


@dataclass(frozen=True)
class ProjectionDiagnostics:
    residual: float
    bound: float
    stability: Optional[float] = None

    @property
    def holds(self) -> bool:
        return self.residual <= self.bound * (1.0 + 1e-9) + 1e-14


def _fix_signs(coefficients: np.ndarray) -> np.ndarray:
    if coefficients.size == 0:
        return coefficients
    pivots = np.argmax(np.abs(coefficients), axis=0)
    signs = np.sign(coefficients[pivots, np.arange(coefficients.shape[1])])
    signs[signs == 0] = 1.0
    return coefficients * signs


def solve_spectral1(ops: BlockOperators, snapshot: SnapshotSpace, H: float) -> EigenData:
    """Full family-1 spectrum in snapshot coordinates"""
    B = snapshot.basis
    T = B[ops.topology.boundary_nodes]
    gram = ops.kappa_tilde * (T.T @ ops.boundary_mass @ T)
    stiffness = B.T @ (ops.stiffness @ B)
    stiffness = 0.5 * (stiffness + stiffness.T)

    W = orthonormalize(gram)
    if W.shape[1] < B.shape[1]:
        logger.debug(f"Block {ops.index}: {B.shape[1] - W.shape[1]} dependent snapshots dropped")

    mu, Y = la.eigh(W.T @ stiffness @ W)
    coefficients = _fix_signs(W @ Y)
    eigenvalues = np.clip(H * mu, 0.0, None)

    return EigenData(ops.index, 1, eigenvalues, coefficients, B @ coefficients,
                     'kappa_tilde boundary mass', W)


def solve_spectral2(ops: BlockOperators, H: float, m_max: int = DEFAULT_M_MAX) -> EigenData:
    """Lowest m_max interior eigenpairs"""
    interior = ops.topology.interior_nodes
    n_int = len(interior)
    if m_max > n_int:
        logger.warning(f"Block {ops.index}: m_max={m_max} exceeds {n_int} interior nodes, clamping")
        m_max = n_int

    functions = np.zeros((ops.topology.n_nodes, max(m_max, 0)))
    if m_max <= 0:
        return EigenData(ops.index, 2, np.zeros(0), np.zeros((n_int, 0)), functions,
                         'kappa interior mass')

    A = ops.stiffness[interior][:, interior].toarray()
    M = ops.kappa_mass[interior][:, interior].toarray()
    mu, V = la.eigh(A, M, subset_by_index=[0, m_max - 1])
    V = _fix_signs(V)
    functions[interior] = V
    return EigenData(ops.index, 2, np.clip(H * H * mu, 0.0, None), V, functions,
                     'kappa interior mass')


def compute_block_spectra(grid: Grid, kappa: PermeabilityField,
                          operators: Sequence[BlockOperators],
                          oversampling: bool = False, halo: int = 1, n_pod: int = 40,
                          family2: bool = True, m_max: int = DEFAULT_M_MAX) -> List[BlockSpectra]:
    """Snapshots and eigenpairs for every block"""
    def one(ops):
        if oversampling:
            snapshot = build_oversampled_snapshots(grid, kappa, ops, halo, n_pod)
        else:
            snapshot = build_snapshot1(ops)
        eig1 = solve_spectral1(ops, snapshot, grid.H)
        eig2 = solve_spectral2(ops, grid.H, m_max) if family2 else None
        return BlockSpectra(ops, snapshot, eig1, eig2)

    spectra = block_map(one, operators)
    logger.info(f"Computed local spectra ({'oversampled' if oversampling else 'plain'} snapshots), "
                f"max Lambda={snapshot_lambda_max(spectra):.4g}")
    return spectra


def snapshot_lambda_max(spectra: Sequence[BlockSpectra]) -> float:
    """max over blocks of the largest family-1 eigenvalue"""
    return max(s.eig1.lambda_max for s in spectra)


# ---------------------------------------------------------------------------
# Offline state
# ---------------------------------------------------------------------------

def _as_index_array(indices) -> np.ndarray:
    return np.unique(np.asarray(list(indices), dtype=int))


@dataclass(frozen=True)
class OfflineState:
    """Active 0-based eigen-indices per block for both families"""
    active1: Tuple[np.ndarray, ...]
    active2: Tuple[np.ndarray, ...]

    @classmethod
    def initial(cls, spectra: Sequence[BlockSpectra], l1: int = 4, l2: int = 0) -> 'OfflineState':
        """First l1/l2 eigenfunctions per block, clamped to the computed spectra"""
        return cls(
            tuple(np.arange(min(l1, s.spectrum_size(1))) for s in spectra),
            tuple(np.arange(min(l2, s.spectrum_size(2))) for s in spectra),
        )

    @property
    def n_blocks(self) -> int:
        return len(self.active1)

    @property
    def dof(self) -> int:
        return int(sum(len(a) for a in self.active1) + sum(len(a) for a in self.active2))

    def active(self, block: int, family: int) -> np.ndarray:
        return (self.active1 if family == 1 else self.active2)[block]

    def inactive(self, block: int, family: int, spectrum_size: int) -> np.ndarray:
        return np.setdiff1d(np.arange(spectrum_size), self.active(block, family))

    def is_prefix(self, block: int, family: int) -> bool:
        a = self.active(block, family)
        return bool(np.array_equal(a, np.arange(len(a))))

    def family_count(self, family: int) -> int:
        return int(sum(len(a) for a in (self.active1 if family == 1 else self.active2)))

    def with_active(self, block: int, family: int, indices) -> 'OfflineState':
        sets = list(self.active1 if family == 1 else self.active2)
        sets[block] = _as_index_array(indices)
        if family == 1:
            return OfflineState(tuple(sets), self.active2)
        return OfflineState(self.active1, tuple(sets))

    def add(self, block: int, family: int, indices) -> 'OfflineState':
        merged = np.concatenate([self.active(block, family), np.asarray(list(indices), dtype=int)])
        return self.with_active(block, family, merged)

    def validate(self, spectra: Sequence[BlockSpectra]) -> None:
        for s in spectra:
            for j in (1, 2):
                a = self.active(s.index, j)
                if len(a) and (a.min() < 0 or a.max() >= s.spectrum_size(j)):
                    raise IndexError(f"Block {s.index} family {j}: active indices {a.tolist()} "
                                     f"outside spectrum of size {s.spectrum_size(j)}")


def build_offline_space(state: OfflineState, spectra: Sequence[BlockSpectra], grid: Grid) -> BasisSet:
    """Fine-coefficient columns of every active eigenfunction, blockwise, family 1 first"""
    state.validate(spectra)
    vectors, families, indices = [], [], []
    for s in spectra:
        for j in (1, 2):
            data = s.family(j)
            for k in state.active(s.index, j):
                vectors.append((s.index, data.functions[:, k]))
                families.append(j)
                indices.append(int(k))
    if not vectors:
        raise ValueError("Offline space is empty")
    return BasisSet.from_blocks(grid, vectors, families, indices)


# ---------------------------------------------------------------------------
# Projection diagnostics
# ---------------------------------------------------------------------------

def family_gram(spectra: BlockSpectra, family: int, u: np.ndarray, w: np.ndarray) -> float:
    """Unscaled weighted mass inner product of two block vectors"""
    ops = spectra.operators
    if family == 1:
        return float(ops.kappa_tilde * (ops.trace(u) @ ops.boundary_mass @ ops.trace(w)))
    return float(u @ (ops.kappa_mass @ w))


def vj_norm2(spectra: BlockSpectra, family: int, u: np.ndarray, H: float) -> float:
    """||u||_{V_j(K)}^2: H^-1 int_dK kappa_tilde u^2 or H^-2 int_K kappa u^2"""
    return family_gram(spectra, family, u, u) / H ** family


def projection_diagnostics(spectra: BlockSpectra, family: int, v: np.ndarray, l: int,
                           H: float, form: Optional[DGForm] = None) -> ProjectionDiagnostics:
    """
    Truncation residual against the eigenvalue bound

    Args:
        spectra: Block spectra
        family: 1 or 2
        v: Snapshot-space coefficients of family `family`
        l: Number of leading eigenfunctions kept
        H: Coarse size
        form: When given, also reports ||P v||_a / ((lambda_l + gamma H/h)^1/2 ||v||_Vj)

    Returns:
        residual ||v - P v||_Vj and bound lambda_{l+1}^-1/2 a_K(v, v)^1/2
    """
    data = spectra.family(family)
    if data is None or l >= data.size or l < 0:
        raise IndexError(f"Truncation level {l} beyond family-{family} spectrum "
                         f"of size {0 if data is None else data.size}")

    ops = spectra.operators
    v = np.asarray(v, dtype=np.float64)
    if family == 1:
        v_fine = spectra.snapshot1.basis @ v
    else:
        v_fine = np.zeros(ops.topology.n_nodes)
        v_fine[ops.topology.interior_nodes] = v

    projected = np.zeros_like(v_fine)
    for k in range(l):
        phi = data.functions[:, k]
        projected += family_gram(spectra, family, phi, v_fine) * phi

    residual = np.sqrt(max(vj_norm2(spectra, family, v_fine - projected, H), 0.0))
    energy = max(float(v_fine @ (ops.stiffness @ v_fine)), 0.0)
    next_lambda = data.eigenvalues[l]
    bound = np.inf if next_lambda <= 0 else float(np.sqrt(energy / next_lambda))

    stability = None
    if form is not None:
        dofs = form.grid.block_dofs(ops.index)
        local = form.matrix[dofs, dofs]
        pv_a = np.sqrt(max(float(projected @ (local @ projected)), 0.0))
        lam_l = data.eigenvalues[l - 1] if l >= 1 else 0.0
        v_norm = np.sqrt(vj_norm2(spectra, family, v_fine, H))
        denom = np.sqrt(lam_l + form.gamma * H / form.grid.h) * v_norm
        stability = float(pv_a / denom) if denom > 0 else 0.0

    return ProjectionDiagnostics(float(residual), bound, stability)
