"""
Fine reference solve, coarse offline solve and relative errors
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from ..discretization.dg_form import BasisSet, DGForm
from ..exceptions import SolverError
from .spectral import BlockSpectra, OfflineState, build_offline_space

logger = logging.getLogger(__name__)

FINE = 'fine'
OFFLINE = 'offline'
SNAPSHOT = 'snapshot'

DIRECT_LIMIT = 200_000
CG_RTOL = 1e-10
RESIDUAL_TOL = 1e-9
EIG_DROP = 1e-12


@dataclass
class Solution:
    """Coefficients in a basis plus the fine DG representation"""
    space: str
    coefficients: np.ndarray
    fine: np.ndarray
    basis: Optional[BasisSet] = None

    def block(self, grid, i: int) -> np.ndarray:
        return self.fine[grid.block_dofs(i)]


def solve_fine(form: DGForm, method: str = 'auto', direct_limit: int = DIRECT_LIMIT,
               rtol: float = CG_RTOL) -> Solution:
    """
    Fine-grid DG solution

    Sparse direct factorization up to direct_limit DOFs, Jacobi-preconditioned
    conjugate gradients above (or when method='cg').
    """
    S, b = form.matrix, form.load
    n = S.shape[0]
    if method == 'auto':
        method = 'direct' if n <= direct_limit else 'cg'

    if method == 'direct':
        u = spla.spsolve(S.tocsc(), b)
    elif method == 'cg':
        diag = S.diagonal()
        if np.any(diag <= 0):
            raise SolverError("Nonpositive diagonal in a_DG: invalid permeability or penalty")
        preconditioner = sparse.diags(1.0 / diag)
        u, info = spla.cg(S, b, rtol=rtol, maxiter=10 * n, M=preconditioner)
        if info != 0:
            raise SolverError(f"Fine CG did not converge (info={info}); gamma={form.gamma:g} "
                              f"may be below the coercivity threshold")
    else:
        raise ValueError(f"Unknown fine solver '{method}'")

    if not np.all(np.isfinite(u)):
        raise SolverError(f"Fine solve failed: gamma={form.gamma:g} too small or kappa invalid")

    residual = np.linalg.norm(S @ u - b)
    scale = max(np.linalg.norm(b), np.finfo(float).tiny)
    if residual > RESIDUAL_TOL * scale and np.linalg.norm(b) > 0:
        logger.warning(f"Fine residual {residual / scale:.2e} above {RESIDUAL_TOL:g}")

    logger.info(f"Fine solve ({method}) on {n} DOFs done")
    return Solution(FINE, u, u)


def _solve_reduced(K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return la.cho_solve(la.cho_factor(K), rhs)
    except la.LinAlgError:
        pass

    w, V = la.eigh(K)
    top = np.abs(w).max() if w.size else 0.0
    if np.any(w < -EIG_DROP * top):
        raise SolverError(f"Reduced system is indefinite (min eigenvalue {w.min():.3e}); "
                          f"increase the penalty")
    keep = w > EIG_DROP * top
    logger.warning(f"Reduced system singular: dropping {int((~keep).sum())} dependent directions")
    return V[:, keep] @ ((V[:, keep].T @ rhs) / w[keep])


def solve_in_basis(form: DGForm, basis: BasisSet, space: str = OFFLINE) -> Solution:
    """Galerkin solution of a_DG in the span of a basis"""
    system = form.project(basis)
    coefficients = _solve_reduced(system.matrix, system.rhs)
    fine = np.asarray(basis.matrix @ coefficients).ravel()
    return Solution(space, coefficients, fine, basis)


def solve_coarse(form: DGForm, state: OfflineState, spectra: Sequence[BlockSpectra]) -> Solution:
    """GMsDGM solution in the offline space of a state"""
    basis = build_offline_space(state, spectra, form.grid)
    solution = solve_in_basis(form, basis)
    logger.debug(f"Coarse solve with {basis.size} basis functions")
    return solution


def solve_snapshot_reference(form: DGForm, spectra: Sequence[BlockSpectra]) -> Solution:
    """Solution in the span of every family-1 eigenfunction (the snapshot space)"""
    state = OfflineState(
        tuple(np.arange(s.spectrum_size(1)) for s in spectra),
        tuple(np.zeros(0, dtype=int) for _ in spectra),
    )
    basis = build_offline_space(state, spectra, form.grid)
    return solve_in_basis(form, basis, SNAPSHOT)


def energy_error2(form: DGForm, reference: Solution, approx: Solution) -> float:
    d = reference.fine - approx.fine
    return max(form.energy(d), 0.0)


def relative_errors(approx: Solution, reference: Solution, form: DGForm) -> Tuple[float, float]:
    """(e2, ea): relative L2 and a-norm errors against the reference"""
    d = approx.fine - reference.fine
    ref_l2 = float(reference.fine @ (form.mass @ reference.fine))
    ref_a = form.energy(reference.fine)
    if ref_l2 <= 0 or ref_a <= 0:
        raise ValueError("Reference solution has zero norm")
    e2 = np.sqrt(max(float(d @ (form.mass @ d)), 0.0) / ref_l2)
    ea = np.sqrt(max(form.energy(d), 0.0) / ref_a)
    return float(e2), float(ea)


def manufactured_solution(form: DGForm, spectra: Sequence[BlockSpectra],
                          modes: Sequence[int] = (1, 17, 30)) -> Tuple[DGForm, Solution]:
    """
    Sparse exact solution: the sum over blocks of the listed family-1 eigenfunctions

    modes are 1-based eigen-indices. The load is replaced by a_DG applied to
    the solution, which is therefore also the fine solution.
    """
    grid = form.grid
    u = np.zeros(grid.n_dofs)
    for s in spectra:
        for mode in modes:
            if not 1 <= mode <= s.spectrum_size(1):
                raise IndexError(f"Mode {mode} outside the family-1 spectrum "
                                 f"of block {s.index} (size {s.spectrum_size(1)})")
            u[grid.block_dofs(s.index)] += s.eig1.functions[:, mode - 1]
    load = form.matrix @ u
    logger.info(f"Manufactured solution from modes {list(modes)} on {len(spectra)} blocks")
    return form.with_load(load), Solution(FINE, u, u)
