"""
Convergence reporting for experiment runs.
Writes history/timing/indicator CSVs and the summary table for any strategy.
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..adaptivity.adaptive import ConvergenceRecord
from ..multiscale.solve import Solution

FLOAT_FORMAT = '%.17g'

HISTORY_COLUMNS = ['m', 'strategy', 'dof', 'e2', 'ea', 'e2_snap', 'ea_snap', 'energy_error2',
                   'sum_eta2', 'k_marked', 'n_added', 'n_removed', 'converged']
COMPARISON_COLUMNS = ['experiment', 'strategy', 'm', 'dof', 'ea', 'e2']


def history_frame(records: Sequence[ConvergenceRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.to_row() for r in records], columns=HISTORY_COLUMNS)


def timings_frame(records: Sequence[ConvergenceRecord]) -> pd.DataFrame:
    return pd.DataFrame({'m': [r.iteration for r in records],
                         'seconds': [r.seconds for r in records]})


def coefficients_frame(solution: Solution) -> pd.DataFrame:
    """Offline coefficients tagged by block, family and 0-based eigen-index"""
    basis = solution.basis
    return pd.DataFrame({
        'block': basis.owners,
        'family': basis.families,
        'index': basis.indices,
        'coefficient': np.asarray(solution.coefficients, dtype=np.float64),
    })


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def read_history(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, float_precision='round_trip')


class ConvergenceReport:
    """Artifacts of one strategy run."""

    def __init__(self, experiment: str, records: Sequence[ConvergenceRecord],
                 output_dir: Union[str, Path]):
        self.experiment = experiment
        self.records = list(records)
        self.output_dir = Path(output_dir)

    @property
    def has_snapshot_reference(self) -> bool:
        return any(r.e2_snap is not None for r in self.records)

    def write_history(self) -> Path:
        return write_csv(history_frame(self.records), self.output_dir / 'history.csv')

    def write_timings(self) -> Path:
        return write_csv(timings_frame(self.records), self.output_dir / 'timings.csv')

    def write_indicators(self) -> List[Path]:
        paths = []
        for r in self.records:
            if r.indicators is None or not len(r.indicators):
                continue
            paths.append(write_csv(r.indicators.to_frame(r.iteration),
                                   self.output_dir / 'indicators' / f'iter_{r.iteration}.csv'))
        return paths

    def write_coefficients(self, solution: Solution) -> Path:
        return write_csv(coefficients_frame(solution), self.output_dir / 'coarse_coefficients.csv')

    def format_table(self) -> str:
        """DOF and error columns, one line per iteration."""
        snap = self.has_snapshot_reference
        header = f"{'DOF':>8}  {'e2':>12}  {'ea':>12}"
        if snap:
            header += f"  {'e2_snap':>12}  {'ea_snap':>12}"
        lines = [header, '-' * len(header)]
        for r in self.records:
            line = f"{r.dof:>8d}  {r.e2:>12.4e}  {r.ea:>12.4e}"
            if snap:
                line += f"  {r.e2_snap:>12.4e}  {r.ea_snap:>12.4e}"
            lines.append(line)
        return '\n'.join(lines)

    def format_summary(self, analysis: Optional[Dict[str, Any]] = None) -> str:
        """Human-readable summary."""
        last = self.records[-1] if self.records else None
        strategy = last.strategy if last else 'unknown'
        summary = f"""
📊 {self.experiment.upper()} ({strategy})
{'=' * 60}

{self.format_table()}
"""
        if last is not None:
            summary += f"""
FINAL:
  • DOF: {last.dof}
  • Relative L2 error: {last.e2:.4e}
  • Relative energy error: {last.ea:.4e}
  • Converged: {'yes' if last.converged else 'no'}
"""
        if analysis:
            summary += f"""
ANALYSIS:
  • Rating: {analysis.get('overall_rating', 'n/a')}
  • Monotone energy error: {analysis.get('monotonicity', {}).get('monotone', 'n/a')}
  • Effectivity spread: {analysis.get('effectivity', {}).get('spread', float('nan')):.3g}
"""
        return summary

    def save_summary(self, analysis: Optional[Dict[str, Any]] = None) -> Path:
        path = self.output_dir / 'summary.txt'
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            f.write(self.format_table() + '\n')
        return path


def comparison_frame(histories: Dict[str, pd.DataFrame]) -> pd.DataFrame:
    """Long-format (experiment, strategy, m, dof, ea, e2) from several histories"""
    frames = []
    for name, history in histories.items():
        frame = history[['strategy', 'm', 'dof', 'ea', 'e2']].copy()
        frame.insert(0, 'experiment', name)
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=COMPARISON_COLUMNS)
    return pd.concat(frames, ignore_index=True)[COMPARISON_COLUMNS]
