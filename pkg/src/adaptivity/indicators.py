"""
A-posteriori indicators

R_{j,i}(v) = (load, v) - a_DG(u_H, v) for v in the family-j snapshot space of
block i. Dual norms are exact (weighted gram solves), eta^2 = ||R||^2 /
lambda_next with lambda_next the first inactive eigenvalue.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..discretization.dg_form import DGForm
from ..multiscale.solve import Solution
from ..multiscale.spectral import BlockSpectra, OfflineState, vj_norm2
from ..parallel import block_map

logger = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-14


@dataclass(frozen=True)
class IndicatorEntry:
    block: int
    family: int
    residual_norm: float
    lambda_next: float
    s_value: float
    eta2: float
    frozen: bool = False


@dataclass(frozen=True)
class IndicatorSet:
    """Entries in descending eta^2 (ties broken by block, then family)"""
    entries: Tuple[IndicatorEntry, ...]

    @classmethod
    def from_entries(cls, entries: Iterable[IndicatorEntry]) -> 'IndicatorSet':
        ordered = sorted(entries, key=lambda e: (-e.eta2, e.block, e.family))
        return cls(tuple(ordered))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def eta2(self) -> np.ndarray:
        return np.array([e.eta2 for e in self.entries])

    @property
    def total(self) -> float:
        return float(self.eta2.sum()) if self.entries else 0.0

    def to_frame(self, iteration: int) -> pd.DataFrame:
        return pd.DataFrame({
            'iteration': iteration,
            'block': [e.block for e in self.entries],
            'family': [e.family for e in self.entries],
            'residual_norm': [e.residual_norm for e in self.entries],
            'lambda_next': [e.lambda_next for e in self.entries],
            'eta2': [e.eta2 for e in self.entries],
        })


def fine_residual(form: DGForm, u_H: Solution) -> np.ndarray:
    """load - S u_H on the fine DG space"""
    return form.load - form.matrix @ u_H.fine


def residual_components(spectra: BlockSpectra, family: int, residual_block: np.ndarray) -> np.ndarray:
    """
    r_k = R_{j,i}(basis_k)

    Family 1 tests against the type-1 snapshots, family 2 against interior
    nodal functions.
    """
    if family == 1:
        return spectra.snapshot1.basis.T @ residual_block
    if family == 2:
        return residual_block[spectra.operators.topology.interior_nodes]
    raise ValueError(f"Unknown family {family}")


def residual_dual_norm(spectra: BlockSpectra, family: int, r: np.ndarray, H: float) -> float:
    """sup over the family-j snapshot space of |R(v)| / ||v||_{V_j(K_i)}"""
    if family == 1:
        projected = spectra.eig1.mass_transform.T @ r
        value = H * float(projected @ projected)
    elif family == 2:
        value = H * H * float(r @ spectra.operators.interior_mass_solver.solve(r))
    else:
        raise ValueError(f"Unknown family {family}")
    return float(np.sqrt(max(value, 0.0)))


def next_eigenvalue(state: OfflineState, spectra: BlockSpectra, family: int) -> Optional[float]:
    """Eigenvalue at the smallest inactive index, None when the spectrum is exhausted"""
    inactive = state.inactive(spectra.index, family, spectra.spectrum_size(family))
    if len(inactive) == 0:
        return None
    return float(spectra.family(family).eigenvalues[inactive[0]])


def eta_and_S(residual_norms: Sequence[Tuple[int, int, float]], state: OfflineState,
              spectra: Sequence[BlockSpectra]) -> IndicatorSet:
    """
    eta^2 = ||R||^2 / lambda_next and S = lambda_next^-1/2 ||R||

    Exhausted spectra give a frozen entry with eta = 0.
    """
    entries = []
    for block, family, norm in residual_norms:
        lam = next_eigenvalue(state, spectra[block], family)
        if lam is None:
            entries.append(IndicatorEntry(block, family, norm, float('nan'), 0.0, 0.0, True))
            continue
        lam = max(lam, LAMBDA_FLOOR)
        s_value = float(norm / np.sqrt(lam))
        entries.append(IndicatorEntry(block, family, norm, lam, s_value, s_value * s_value))
    return IndicatorSet.from_entries(entries)


def compute_indicators(form: DGForm, spectra: Sequence[BlockSpectra], state: OfflineState,
                       u_H: Solution, families: Sequence[int] = (1, 2)) -> IndicatorSet:
    """Residual dual norms and eta for every (block, family) pair"""
    grid = form.grid
    residual = fine_residual(form, u_H)
    pairs = [(s.index, j) for s in spectra for j in families if s.family(j) is not None]

    def norm_of(pair):
        i, j = pair
        r = residual_components(spectra[i], j, residual[grid.block_dofs(i)])
        return i, j, residual_dual_norm(spectra[i], j, r, grid.H)

    return eta_and_S(block_map(norm_of, pairs), state, spectra)


def zeta_correlations(spectra: BlockSpectra, family: int, residual_block: np.ndarray,
                      candidates: Sequence[int], H: float) -> np.ndarray:
    """zeta^2 = R(v_l)^2 / ||v_l||_{V_j}^2 for candidate eigenfunctions v_l"""
    data = spectra.family(family)
    values = np.zeros(len(candidates))
    for n, k in enumerate(candidates):
        v = data.functions[:, k]
        norm2 = vj_norm2(spectra, family, v, H)
        values[n] = float(residual_block @ v) ** 2 / norm2 if norm2 > 0 else 0.0
    return values


def exact_local_indicators(form: DGForm, u_h: Solution, u_H: Solution) -> np.ndarray:
    """
    ||u_h - u_H||_{a, K_i} for every block

    Volume energy plus edge terms, interior edges split half/half between the
    two blocks, so the squares sum to the global a-norm error squared.
    """
    grid = form.grid
    d = u_h.fine - u_H.fine
    local = np.zeros(grid.n_blocks)

    for ops in form.operators:
        di = d[grid.block_dofs(ops.index)]
        local[ops.index] = float(di @ (ops.stiffness @ di))

    for edge in grid.edges:
        coupling = form.coupling(edge)
        consistency, penalty = coupling.matrices(form.gamma, grid.h)
        de = d[coupling.dofs]
        energy = float(de @ ((consistency + penalty) @ de))
        if edge.is_boundary:
            local[edge.plus] += energy
        else:
            local[edge.plus] += 0.5 * energy
            local[edge.minus] += 0.5 * energy

    return np.sqrt(np.clip(local, 0.0, None))


def exact_local_indicator(form: DGForm, u_h: Solution, u_H: Solution, block: int) -> float:
    if not 0 <= block < form.grid.n_blocks:
        raise IndexError(f"Block index {block} out of range")
    return float(exact_local_indicators(form, u_h, u_H)[block])
