"""
Adaptive enrichment strategies

adaptive          residual indicators, Doerfler marking, s-rule enrichment
adaptive_removal  adaptive plus removal of negligible basis functions
pursuit           add single eigenfunctions by residual correlation, then remove
uniform           k_u more family-1 functions in every block
exact             Doerfler marking on exact local errors (family 1)
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..discretization.dg_form import DEFAULT_PENALTY, DGForm, assemble_dg_form, auto_penalty
from ..discretization.grid import Grid
from ..discretization.local_fem import build_block_operators
from ..fields.permeability import PermeabilityField
from ..multiscale.solve import (
    Solution, energy_error2, manufactured_solution, relative_errors, solve_coarse, solve_fine,
    solve_snapshot_reference,
)
from ..multiscale.spectral import (
    BlockSpectra, DEFAULT_M_MAX, OfflineState, compute_block_spectra, snapshot_lambda_max,
)
from .indicators import (
    IndicatorEntry, IndicatorSet, compute_indicators, exact_local_indicators, fine_residual,
    zeta_correlations,
)

logger = logging.getLogger(__name__)

STRATEGIES = ('adaptive', 'adaptive_removal', 'pursuit', 'uniform', 'exact')

DEFAULT_REMOVAL_TOL = 1e-12
DORFLER_SLACK = 1e-12


@dataclass
class AdaptiveConfig:
    strategy: str = 'adaptive'
    theta: float = 0.4
    delta0: float = 0.75
    removal_tol: Optional[float] = None
    max_iterations: int = 10
    l1: int = 4
    l2: int = 0
    families: Tuple[int, ...] = (1,)
    uniform_increment: int = 4
    m_max: int = DEFAULT_M_MAX
    dof_budget: Optional[int] = None
    removal_growth_limit: float = 0.10
    convergence_tol: float = 1e-12

    def __post_init__(self):
        self.families = tuple(int(j) for j in self.families)

    @property
    def epsilon(self) -> float:
        """Removal tolerance in effect; 0 disables removal"""
        if self.removal_tol is not None:
            return float(self.removal_tol)
        return DEFAULT_REMOVAL_TOL if self.strategy in ('pursuit', 'adaptive_removal') else 0.0

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"Unknown strategy '{self.strategy}'. Available: {list(STRATEGIES)}")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if not 0.0 < self.delta0 < 1.0:
            raise ValueError(f"delta0 must lie in (0, 1), got {self.delta0}")
        if self.removal_tol is not None and self.removal_tol < 0:
            raise ValueError(f"removal_tol must be >= 0, got {self.removal_tol}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.l1 < 0 or self.l2 < 0 or self.l1 + self.l2 == 0:
            raise ValueError(f"Initial counts l1={self.l1}, l2={self.l2} give an empty space")
        if not self.families or any(j not in (1, 2) for j in self.families):
            raise ValueError(f"families must be a subset of (1, 2), got {self.families}")
        if self.uniform_increment < 1:
            raise ValueError(f"uniform_increment must be >= 1, got {self.uniform_increment}")

    @property
    def needs_family2(self) -> bool:
        return 2 in self.families or self.l2 > 0 or self.strategy == 'pursuit'


@dataclass
class ConvergenceRecord:
    """One iteration: the solution of the current space and what was changed"""
    iteration: int
    strategy: str
    dof: int
    e2: float
    ea: float
    e2_snap: Optional[float]
    ea_snap: Optional[float]
    energy_error2: float
    sum_eta2: float
    k_marked: int
    n_added: int
    n_removed: int
    converged: bool
    seconds: float = 0.0
    indicators: Optional[IndicatorSet] = field(default=None, repr=False, compare=False)
    solution: Optional[Solution] = field(default=None, repr=False, compare=False)

    def to_row(self) -> Dict[str, Any]:
        """CSV row without wall time"""
        return {
            'm': self.iteration,
            'strategy': self.strategy,
            'dof': self.dof,
            'e2': self.e2,
            'ea': self.ea,
            'e2_snap': self.e2_snap,
            'ea_snap': self.ea_snap,
            'energy_error2': self.energy_error2,
            'sum_eta2': self.sum_eta2,
            'k_marked': self.k_marked,
            'n_added': self.n_added,
            'n_removed': self.n_removed,
            'converged': self.converged,
        }


@dataclass
class ProblemContext:
    """Everything fixed across iterations: form, offline spectra and references"""
    form: DGForm
    spectra: List[BlockSpectra]
    fine: Solution
    snapshot: Optional[Solution] = None
    kappa: Optional[PermeabilityField] = None

    @property
    def grid(self) -> Grid:
        return self.form.grid

    @classmethod
    def build(cls, grid: Grid, kappa: PermeabilityField, f=None, g=None,
              gamma: Union[float, str] = DEFAULT_PENALTY, gamma_alpha: float = 2.0,
              oversampling: bool = False, halo: int = 1, n_pod: int = 40,
              family2: bool = True, m_max: int = DEFAULT_M_MAX,
              snapshot_reference: bool = False,
              sparse_modes: Optional[Sequence[int]] = None,
              fine_method: str = 'auto') -> 'ProblemContext':
        """Operators, spectra, penalty, a_DG, fine (and snapshot) reference"""
        operators = build_block_operators(grid, kappa)
        spectra = compute_block_spectra(grid, kappa, operators, oversampling, halo, n_pod,
                                        family2, m_max)
        if gamma == 'auto':
            gamma = auto_penalty(grid, operators, snapshot_lambda_max(spectra), gamma_alpha)

        form = assemble_dg_form(grid, kappa, float(gamma), f, g, operators)
        if sparse_modes:
            form, fine = manufactured_solution(form, spectra, sparse_modes)
        else:
            fine = solve_fine(form, fine_method)

        snapshot = solve_snapshot_reference(form, spectra) if snapshot_reference else None
        return cls(form, spectra, fine, snapshot, kappa)


@dataclass
class StrategyResult:
    records: List[ConvergenceRecord]
    final_state: OfflineState

    @property
    def final_solution(self) -> Optional[Solution]:
        return self.records[-1].solution if self.records else None


# ---------------------------------------------------------------------------
# Marking and selection rules
# ---------------------------------------------------------------------------

def dorfler_mark(eta2: Sequence[float], theta: float) -> int:
    """
    Smallest k with sum_{J<=k} eta2_J >= theta * sum_J eta2_J

    eta2 must be sorted descending. Returns 0 when every value is zero.
    """
    values = np.asarray(eta2, dtype=np.float64)
    total = float(values.sum()) if values.size else 0.0
    if total <= 0.0:
        return 0
    cumulative = np.cumsum(values)
    target = theta * total * (1.0 - DORFLER_SLACK)
    return int(np.argmax(cumulative >= target)) + 1


def choose_s(eigenvalues: Sequence[float], l: int, delta0: float) -> int:
    """
    Smallest s >= 1 with lambda[l+s] >= lambda[l] / delta0 (0-based)

    When no such s exists the remaining spectrum is taken whole.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    remaining = len(lam) - l
    if remaining <= 0:
        raise ValueError(f"No eigenvalue left after l={l} (spectrum size {len(lam)})")
    target = lam[l] / delta0
    for s in range(1, remaining):
        if lam[l + s] >= target:
            return s
    return remaining


def enrich_pair(state: OfflineState, spectra: BlockSpectra, family: int,
                delta0: float) -> Tuple[OfflineState, int]:
    """Add the s-rule count of inactive eigenfunctions for one (block, family)"""
    inactive = state.inactive(spectra.index, family, spectra.spectrum_size(family))
    if len(inactive) == 0:
        return state, 0
    s = choose_s(spectra.family(family).eigenvalues[inactive], 0, delta0)
    return state.add(spectra.index, family, inactive[:s]), s


def remove_basis(state: OfflineState, u_H: Solution, epsilon: float) -> Tuple[OfflineState, int]:
    """
    Drop basis functions with alpha^2 < epsilon * (sum of alpha^2 in the block)

    alpha are the coefficients of u_H in the offline eigenbasis. Each block
    keeps at least its family-1 function with the largest alpha^2.
    """
    if epsilon <= 0 or u_H.basis is None:
        return state, 0

    basis = u_H.basis
    alpha2 = np.asarray(u_H.coefficients, dtype=np.float64) ** 2
    removed = 0
    for block in np.unique(basis.owners):
        mask = basis.owners == block
        total = alpha2[mask].sum()
        drop = mask & (alpha2 < epsilon * total)
        if not drop.any():
            continue

        fam1 = mask & (basis.families == 1)
        if fam1.any() and not (fam1 & ~drop).any():
            cols = np.flatnonzero(fam1)
            drop[cols[np.argmax(alpha2[cols])]] = False

        for j in (1, 2):
            gone = basis.indices[drop & (basis.families == j)]
            if len(gone):
                keep = np.setdiff1d(state.active(int(block), j), gone)
                state = state.with_active(int(block), j, keep)
                removed += len(gone)

    return state, removed


def uniform_step(state: OfflineState, k_u: int, spectra: Sequence[BlockSpectra]) -> OfflineState:
    """k_u more family-1 eigenfunctions per block, clamped at the spectrum"""
    for s in spectra:
        inactive = state.inactive(s.index, 1, s.spectrum_size(1))
        if len(inactive):
            state = state.add(s.index, 1, inactive[:k_u])
    return state


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------

@dataclass
class _Evaluation:
    solution: Solution
    e2: float
    ea: float
    e2_snap: Optional[float]
    ea_snap: Optional[float]
    energy_error2: float
    reference_energy: float


def _evaluate(state: OfflineState, problem: ProblemContext) -> _Evaluation:
    u_H = solve_coarse(problem.form, state, problem.spectra)
    e2, ea = relative_errors(u_H, problem.fine, problem.form)
    e2_snap = ea_snap = None
    if problem.snapshot is not None:
        e2_snap, ea_snap = relative_errors(u_H, problem.snapshot, problem.form)
    return _Evaluation(u_H, e2, ea, e2_snap, ea_snap,
                       energy_error2(problem.form, problem.fine, u_H),
                       max(problem.form.energy(u_H.fine), 0.0))


def _is_converged(total: float, reference_energy: float, tol: float) -> bool:
    return total <= (tol ** 2) * max(reference_energy, np.finfo(float).tiny)


def _exact_indicator_set(problem: ProblemContext, state: OfflineState, u_H: Solution) -> IndicatorSet:
    local = exact_local_indicators(problem.form, problem.fine, u_H)
    entries = []
    for s in problem.spectra:
        value = float(local[s.index])
        frozen = len(state.inactive(s.index, 1, s.spectrum_size(1))) == 0
        eta2 = 0.0 if frozen else value * value
        entries.append(IndicatorEntry(s.index, 1, value, float('nan'), np.sqrt(eta2), eta2, frozen))
    return IndicatorSet.from_entries(entries)


def _prune(state: OfflineState, config: AdaptiveConfig, problem: ProblemContext) -> Tuple[OfflineState, int]:
    """Solve in the enriched space, remove negligible functions, monitor growth"""
    before = _evaluate(state, problem)
    pruned, n_removed = remove_basis(state, before.solution, config.epsilon)
    if n_removed:
        after = _evaluate(pruned, problem)
        if after.ea > before.ea * (1.0 + config.removal_growth_limit) + 1e-15:
            logger.warning(f"Removal of {n_removed} functions grew ea from {before.ea:.4e} "
                           f"to {after.ea:.4e}, above the {config.removal_growth_limit:.0%} limit")
        else:
            logger.debug(f"Removed {n_removed} functions, ea {before.ea:.4e} -> {after.ea:.4e}")
    return pruned, n_removed


def _record(iteration: int, config: AdaptiveConfig, state: OfflineState, ev: _Evaluation,
            indicators: IndicatorSet, k: int, n_added: int, n_removed: int,
            converged: bool, started: float) -> ConvergenceRecord:
    record = ConvergenceRecord(
        iteration=iteration,
        strategy=config.strategy,
        dof=state.dof,
        e2=ev.e2,
        ea=ev.ea,
        e2_snap=ev.e2_snap,
        ea_snap=ev.ea_snap,
        energy_error2=ev.energy_error2,
        sum_eta2=indicators.total,
        k_marked=k,
        n_added=n_added,
        n_removed=n_removed,
        converged=converged,
        seconds=time.perf_counter() - started,
        indicators=indicators,
        solution=ev.solution,
    )
    logger.info(f"[{config.strategy}] m={iteration} DOF={record.dof} e2={record.e2:.4e} "
                f"ea={record.ea:.4e} sum_eta2={record.sum_eta2:.4e} marked={k} "
                f"+{n_added} -{n_removed}")
    return record


def adaptive_step(state: OfflineState, config: AdaptiveConfig, problem: ProblemContext,
                  iteration: int = 0) -> Tuple[OfflineState, ConvergenceRecord]:
    """Solve, estimate, mark, enrich (and prune for adaptive_removal)"""
    started = time.perf_counter()
    ev = _evaluate(state, problem)

    if config.strategy == 'exact':
        indicators = _exact_indicator_set(problem, state, ev.solution)
    else:
        indicators = compute_indicators(problem.form, problem.spectra, state, ev.solution,
                                        config.families)

    converged = _is_converged(indicators.total, ev.reference_energy, config.convergence_tol)
    k = 0 if converged else dorfler_mark(indicators.eta2, config.theta)
    converged = converged or k == 0

    new_state, n_added = state, 0
    for entry in indicators.entries[:k]:
        if entry.frozen:
            continue
        new_state, added = enrich_pair(new_state, problem.spectra[entry.block], entry.family,
                                       config.delta0)
        n_added += added

    n_removed = 0
    if config.strategy == 'adaptive_removal' and n_added and config.epsilon > 0:
        new_state, n_removed = _prune(new_state, config, problem)

    return new_state, _record(iteration, config, state, ev, indicators, k, n_added,
                              n_removed, converged, started)


def pursuit_step(state: OfflineState, config: AdaptiveConfig, problem: ProblemContext,
                 iteration: int = 0) -> Tuple[OfflineState, ConvergenceRecord]:
    """
    Add every inactive eigenfunction with zeta >= theta * zeta_max, then prune

    Candidates are the inactive eigenfunctions of both families in every block.
    """
    started = time.perf_counter()
    ev = _evaluate(state, problem)
    grid = problem.grid
    indicators = compute_indicators(problem.form, problem.spectra, state, ev.solution,
                                    config.families)
    residual = fine_residual(problem.form, ev.solution)

    candidates = []
    for s in problem.spectra:
        r_block = residual[grid.block_dofs(s.index)]
        for j in (1, 2):
            if s.family(j) is None:
                continue
            inactive = state.inactive(s.index, j, s.spectrum_size(j))
            if len(inactive) == 0:
                continue
            zeta2 = zeta_correlations(s, j, r_block, inactive, grid.H)
            candidates.extend((float(z), s.index, j, int(k)) for z, k in zip(zeta2, inactive))

    candidates.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))
    top = candidates[0][0] if candidates else 0.0
    converged = _is_converged(top, ev.reference_energy, config.convergence_tol)

    new_state, n_added = state, 0
    if not converged:
        threshold = (config.theta ** 2) * top
        for zeta2, block, j, k in candidates:
            if zeta2 < threshold:
                break
            new_state = new_state.add(block, j, [k])
            n_added += 1

    n_removed = 0
    if n_added and config.epsilon > 0:
        new_state, n_removed = _prune(new_state, config, problem)

    return new_state, _record(iteration, config, state, ev, indicators, n_added, n_added,
                              n_removed, converged, started)


def _uniform_record_step(state: OfflineState, config: AdaptiveConfig, problem: ProblemContext,
                         iteration: int = 0) -> Tuple[OfflineState, ConvergenceRecord]:
    started = time.perf_counter()
    ev = _evaluate(state, problem)
    indicators = compute_indicators(problem.form, problem.spectra, state, ev.solution, (1,))
    new_state = uniform_step(state, config.uniform_increment, problem.spectra)
    n_added = new_state.dof - state.dof
    converged = n_added == 0
    return new_state, _record(iteration, config, state, ev, indicators, 0, n_added, 0,
                              converged, started)


STEP_FUNCTIONS = {
    'adaptive': adaptive_step,
    'adaptive_removal': adaptive_step,
    'exact': adaptive_step,
    'pursuit': pursuit_step,
    'uniform': _uniform_record_step,
}


def _same_state(a: OfflineState, b: OfflineState) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a.active1 + a.active2, b.active1 + b.active2))


def run_strategy(config: AdaptiveConfig, problem: ProblemContext,
                 initial: Optional[OfflineState] = None) -> StrategyResult:
    """
    Iterate one strategy until max_iterations, the DOF budget or convergence

    Returns:
        Records (one per solved space) and the last state
    """
    config.validate()
    step = STEP_FUNCTIONS[config.strategy]
    state = initial or OfflineState.initial(problem.spectra, config.l1, config.l2)
    logger.info(f"Running {config.strategy} from DOF={state.dof}")

    records = []
    for m in range(config.max_iterations):
        new_state, record = step(state, config, problem, m)
        records.append(record)
        if record.converged:
            logger.info(f"[{config.strategy}] converged at m={m}")
            break
        if _same_state(new_state, state):
            logger.info(f"[{config.strategy}] no change at m={m}, stopping")
            break
        if config.dof_budget is not None and new_state.dof > config.dof_budget:
            logger.info(f"[{config.strategy}] DOF budget {config.dof_budget} reached")
            break
        state = new_state

    return StrategyResult(records, state)
