"""
Experiment Runner Module
Builds the problem of an experiment, runs its strategy and writes artifacts
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..adaptivity.adaptive import ProblemContext, StrategyResult, run_strategy
from ..analysis.convergence_analyzer import ConvergenceAnalyzer, matched_dof_comparison
from ..discretization.grid import Grid, build_grid
from ..discretization.local_fem import build_block_operators
from ..fields.permeability import PermeabilityField, load_or_generate_kappa
from ..fields.sources import load_boundary, load_or_generate_source
from ..multiscale.spectral import compute_block_spectra
from ..reporting.binary_store import save_field, save_offline
from ..reporting.convergence_report import (
    ConvergenceReport, comparison_frame, history_frame, write_csv,
)
from .experiment_config import ExperimentConfig, export_config, validate_experiment
from .run_tracker import RunTracker

logger = logging.getLogger(__name__)

DEFAULT_SPARSE_MODES = (1, 17, 30)


@dataclass
class ProblemData:
    """Grid and coefficient data of an experiment"""
    grid: Grid
    kappa: PermeabilityField
    source: Optional[np.ndarray]
    boundary: Any
    sparse_modes: Optional[Tuple[int, ...]] = None


@dataclass
class RunResult:
    experiment: str
    strategy: StrategyResult
    history: pd.DataFrame
    analysis: Dict[str, Any]
    recommendations: List[str]
    artifacts: Dict[str, str] = field(default_factory=dict)
    output_dir: Optional[Path] = None


def build_problem_data(config: ExperimentConfig) -> ProblemData:
    """Grid, permeability, source and Dirichlet data described by a config"""
    domain = tuple(float(v) for v in config.grid.domain)
    grid = build_grid(config.grid.Nc, config.grid.nf, domain)
    kappa = load_or_generate_kappa(config.fields.kappa, grid.n_cells)
    source = load_or_generate_source(config.fields.source, grid.n_cells, domain)
    boundary = load_boundary(config.fields.boundary, grid.n_cells, domain)

    sparse_modes = None
    if config.fields.source.get('kind') == 'sparse_modes':
        sparse_modes = tuple(int(m) for m in config.fields.source.get('modes', DEFAULT_SPARSE_MODES))
    return ProblemData(grid, kappa, source, boundary, sparse_modes)


def build_context(config: ExperimentConfig, data: Optional[ProblemData] = None) -> ProblemContext:
    data = data or build_problem_data(config)
    solver, offline = config.solver, config.offline
    gamma = solver.gamma if solver.gamma == 'auto' else float(solver.gamma)
    return ProblemContext.build(
        data.grid, data.kappa, data.source, data.boundary,
        gamma=gamma,
        gamma_alpha=solver.gamma_alpha,
        oversampling=offline.oversampling,
        halo=offline.halo,
        n_pod=offline.n_pod,
        family2=config.adaptive.needs_family2,
        m_max=config.adaptive.m_max,
        snapshot_reference=offline.snapshot_reference,
        sparse_modes=data.sparse_modes,
        fine_method=solver.fine_method,
    )


def _context_key(config: ExperimentConfig) -> str:
    return json.dumps({
        'problem': config.problem_signature(),
        'solver': asdict(config.solver),
        'offline': asdict(config.offline),
        'family2': config.adaptive.needs_family2,
        'm_max': config.adaptive.m_max,
    }, sort_keys=True, default=str)


class ExperimentRunner:
    """
    Executes one experiment: problem setup, strategy iterations, artifacts
    """

    def __init__(self, config: ExperimentConfig, output_dir: Optional[Union[str, Path]] = None):
        self.config = config
        self.output_dir = Path(output_dir) if output_dir else config.output_dir
        self.tracker = RunTracker(config.name, self.output_dir)
        self.analyzer = ConvergenceAnalyzer(config.adaptive.removal_growth_limit)

    def check(self) -> None:
        validation = validate_experiment(self.config)
        for warning in validation['warnings']:
            logger.warning(warning)
        if not validation['valid']:
            raise ValueError(f"Invalid experiment '{self.config.name}': {validation['errors']}")

    def run(self, context: Optional[ProblemContext] = None) -> RunResult:
        """
        Run the configured strategy and write every artifact

        Args:
            context: Pre-built problem to reuse (same grid, fields and offline settings)

        Raises:
            ValueError: Invalid configuration
            SolverError: Numerical failure in any solve
        """
        self.check()
        started = time.perf_counter()
        try:
            if context is None:
                context = build_context(self.config)
            result = run_strategy(self.config.adaptive, context)
            run = self._report(result, context)
        except Exception as e:
            self.tracker.fail(e)
            self.tracker.save_tracking_data(self.config.raw_config)
            raise

        run.artifacts['run'] = str(self.tracker.save_tracking_data(
            self.config.raw_config, self._results_summary(run, time.perf_counter() - started)))
        return run

    def _report(self, result: StrategyResult, context: ProblemContext) -> RunResult:
        output = self.config.output
        report = ConvergenceReport(self.config.name, result.records, self.output_dir)
        history = history_frame(result.records)
        analysis = self.analyzer.analyze(history)
        recommendations = self.analyzer.generate_recommendations(analysis)

        self.tracker.add_artifact('history', report.write_history())
        self.tracker.add_artifact('timings', report.write_timings())
        self.tracker.add_artifact('summary', report.save_summary(analysis))
        self.tracker.add_artifact('config', export_config(self.config, self.output_dir / 'config.yaml'))
        if output.save_indicators:
            paths = report.write_indicators()
            if paths:
                self.tracker.add_artifact('indicators', paths[0].parent)

        final = result.final_solution
        if output.save_solutions and final is not None:
            self.tracker.add_artifact('solution_fine', save_field(self.output_dir / 'solution_fine.bin',
                                                                  context.fine.fine))
            self.tracker.add_artifact('solution_coarse', save_field(self.output_dir / 'solution_coarse.bin',
                                                                    final.fine))
            self.tracker.add_artifact('coarse_coefficients', report.write_coefficients(final))
        if output.save_offline:
            self.tracker.add_artifact('offline', save_offline(self.output_dir / 'offline.bin',
                                                              context.spectra))

        logger.info(f"Artifacts written to {self.output_dir}")
        return RunResult(self.config.name, result, history, analysis, recommendations,
                         dict(self.tracker.artifacts), self.output_dir)

    def _results_summary(self, run: RunResult, seconds: float) -> Dict[str, Any]:
        last = run.strategy.records[-1] if run.strategy.records else None
        return {
            'iterations': len(run.strategy.records),
            'final_dof': last.dof if last else None,
            'final_e2': last.e2 if last else None,
            'final_ea': last.ea if last else None,
            'converged': last.converged if last else None,
            'rating': run.analysis.get('overall_rating'),
            'seconds': seconds,
        }


# ---------------------------------------------------------------------------
# Multi-experiment verbs
# ---------------------------------------------------------------------------

def check_comparable(configs: Sequence[ExperimentConfig]) -> None:
    """Reject fewer than two configs or differing grid/kappa/f/g"""
    if len(configs) < 2:
        raise ValueError(f"compare needs at least 2 experiments, got {len(configs)}")
    reference = configs[0].problem_signature()
    for config in configs[1:]:
        if config.problem_signature() != reference:
            raise ValueError(f"Experiment '{config.name}' does not share grid, permeability, "
                             f"source and boundary with '{configs[0].name}'")


def compare(configs: Sequence[ExperimentConfig], output_path: Union[str, Path]) -> pd.DataFrame:
    """
    Run several strategies on one problem and write a long-format comparison

    Problems with identical offline settings are built once and shared.
    """
    check_comparable(configs)
    contexts: Dict[str, ProblemContext] = {}
    histories: Dict[str, pd.DataFrame] = {}
    data = build_problem_data(configs[0])

    for config in configs:
        key = _context_key(config)
        if key not in contexts:
            contexts[key] = build_context(config, data)
        histories[config.name] = ExperimentRunner(config).run(contexts[key]).history

    frame = comparison_frame(histories)
    write_csv(frame, output_path)

    names = list(histories)
    for other in names[1:]:
        matched = matched_dof_comparison(histories[names[0]], histories[other])
        if not matched.empty:
            logger.info(f"Matched-DOF ea ratio {names[0]}/{other}: "
                        f"{', '.join(f'{r:.3g}' for r in matched['ratio'])}")
    logger.info(f"Comparison of {len(configs)} experiments written to {output_path}")
    return frame


def diag_eigs(config: ExperimentConfig, output_path: Optional[Union[str, Path]] = None) -> pd.DataFrame:
    """Largest family-1 eigenvalue per block with and without oversampling"""
    data = build_problem_data(config)
    operators = build_block_operators(data.grid, data.kappa)
    plain = compute_block_spectra(data.grid, data.kappa, operators, oversampling=False, family2=False)
    over = compute_block_spectra(data.grid, data.kappa, operators, oversampling=True,
                                 halo=config.offline.halo, n_pod=config.offline.n_pod,
                                 family2=False)
    frame = pd.DataFrame({
        'block': [s.index for s in plain],
        'lambda_max': [s.eig1.lambda_max for s in plain],
        'lambda_max_oversampled': [s.eig1.lambda_max for s in over],
    })
    path = Path(output_path) if output_path else config.output_dir / 'eigs_diagnostic.csv'
    write_csv(frame, path)
    return frame
