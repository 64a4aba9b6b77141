"""
Convergence Analyzer
Interprets a strategy's history: effectivity of the indicators, monotone
decay, contraction factors, removal growth and matched-DOF comparisons.
"""
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd


class ConvergenceAnalyzer:
    """Analyzes a history frame (columns of history.csv) and provides insights."""

    def __init__(self, removal_growth_limit: float = 0.10):
        self.removal_growth_limit = removal_growth_limit
        self.thresholds = self._load_thresholds()

    def _load_thresholds(self) -> Dict:
        return {
            'contraction': {
                'fast': 0.5,     # error halves per step or better
                'steady': 0.9,
                'stalled': 0.99,
            },
            'effectivity_spread': {
                'reliable': 10.0,
                'loose': 100.0,
            },
            'monotone_slack': 1e-10,
        }

    def analyze_effectivity(self, history: pd.DataFrame) -> Dict[str, Any]:
        """Ratios ||u_h - u_H||_a^2 / sum eta^2 over iterations with a nonzero estimate."""
        rows = history[(history['sum_eta2'] > 0) & (history['energy_error2'] > 0)]
        if rows.empty:
            return {'error': 'No iteration with a nonzero estimate', 'spread': float('nan')}

        ratios = (rows['energy_error2'] / rows['sum_eta2']).to_numpy()
        spread = float(ratios.max() / ratios.min())
        if spread < self.thresholds['effectivity_spread']['reliable']:
            quality = 'RELIABLE'
            interpretation = "Indicator tracks the true error within a bounded factor"
        elif spread < self.thresholds['effectivity_spread']['loose']:
            quality = 'LOOSE'
            interpretation = "Indicator follows the trend with a drifting constant"
        else:
            quality = 'UNRELIABLE'
            interpretation = "Indicator and true error diverge across iterations"

        return {
            'ratios': ratios.tolist(),
            'minimum': float(ratios.min()),
            'maximum': float(ratios.max()),
            'spread': spread,
            'quality': quality,
            'interpretation': interpretation,
        }

    def analyze_monotonicity(self, history: pd.DataFrame) -> Dict[str, Any]:
        """Energy error should not grow when nothing was removed."""
        ea = history['ea'].to_numpy(dtype=float)
        removed = history['n_removed'].to_numpy()
        slack = self.thresholds['monotone_slack']
        violations = []
        for m in range(1, len(ea)):
            if removed[m - 1] == 0 and ea[m] > ea[m - 1] * (1.0 + slack) + slack:
                violations.append(int(history['m'].iloc[m]))
        return {'monotone': not violations, 'violations': violations}

    def contraction_factors(self, history: pd.DataFrame) -> Dict[str, Any]:
        ea = history['ea'].to_numpy(dtype=float)
        if len(ea) < 2:
            return {'factors': [], 'mean': float('nan'), 'pattern': 'INSUFFICIENT_DATA'}

        with np.errstate(divide='ignore', invalid='ignore'):
            factors = np.where(ea[:-1] > 0, ea[1:] / ea[:-1], 0.0)
        mean = float(np.exp(np.mean(np.log(np.clip(factors, 1e-300, None)))))

        t = self.thresholds['contraction']
        if mean <= t['fast']:
            pattern = 'FAST'
        elif mean <= t['steady']:
            pattern = 'STEADY'
        elif mean <= t['stalled']:
            pattern = 'SLOW'
        else:
            pattern = 'STALLED'
        return {'factors': factors.tolist(), 'mean': mean, 'pattern': pattern}

    def removal_growth(self, history: pd.DataFrame) -> Dict[str, Any]:
        """ea after a step with removals against the step before."""
        ea = history['ea'].to_numpy(dtype=float)
        removed = history['n_removed'].to_numpy()
        events = []
        for m in range(1, len(ea)):
            if removed[m - 1] > 0 and ea[m - 1] > 0:
                growth = ea[m] / ea[m - 1] - 1.0
                events.append({'m': int(history['m'].iloc[m]), 'removed': int(removed[m - 1]),
                               'growth': float(growth),
                               'within_limit': growth <= self.removal_growth_limit})
        return {'events': events, 'all_within_limit': all(e['within_limit'] for e in events)}

    def analyze(self, history: pd.DataFrame) -> Dict[str, Any]:
        """Full analysis of one history."""
        if history.empty:
            return {'status': 'NO_DATA', 'message': 'History is empty'}

        analysis = {
            'effectivity': self.analyze_effectivity(history),
            'monotonicity': self.analyze_monotonicity(history),
            'contraction': self.contraction_factors(history),
            'removal': self.removal_growth(history),
            'final': {
                'dof': int(history['dof'].iloc[-1]),
                'ea': float(history['ea'].iloc[-1]),
                'e2': float(history['e2'].iloc[-1]),
            },
        }
        analysis['overall_rating'] = self._rate(analysis)
        return analysis

    def _rate(self, analysis: Dict[str, Any]) -> str:
        pattern = analysis['contraction']['pattern']
        if not analysis['monotonicity']['monotone'] or pattern == 'STALLED':
            return 'POOR'
        if pattern == 'FAST':
            return 'EXCELLENT'
        if pattern == 'STEADY':
            return 'GOOD'
        return 'ACCEPTABLE'

    def generate_recommendations(self, analysis: Dict[str, Any]) -> List[str]:
        recommendations = []
        if analysis.get('status') == 'NO_DATA':
            return recommendations

        pattern = analysis['contraction']['pattern']
        if pattern in ('SLOW', 'STALLED'):
            recommendations.append("Error decays slowly: raise theta or enable family-2 enrichment")
        if not analysis['monotonicity']['monotone']:
            recommendations.append(f"Energy error grew at m={analysis['monotonicity']['violations']}: "
                                   f"check the penalty parameter")
        if analysis['effectivity'].get('quality') == 'UNRELIABLE':
            recommendations.append("Indicator effectivity drifts: compare against the exact strategy")
        if not analysis['removal']['all_within_limit']:
            recommendations.append("Removal grew the error beyond the limit: lower removal_tol")

        if not recommendations:
            recommendations.append("Convergence behaves as expected")
        return recommendations


def matched_dof_comparison(first: pd.DataFrame, second: pd.DataFrame,
                           points: Optional[int] = 5) -> pd.DataFrame:
    """
    ea of two strategies interpolated (log-log) at common DOF values

    Returns:
        Frame with columns dof, ea_first, ea_second, ratio
    """
    a = first.sort_values('dof').drop_duplicates('dof', keep='last')
    b = second.sort_values('dof').drop_duplicates('dof', keep='last')
    lo = max(a['dof'].min(), b['dof'].min())
    hi = min(a['dof'].max(), b['dof'].max())
    if lo > hi:
        return pd.DataFrame(columns=['dof', 'ea_first', 'ea_second', 'ratio'])

    dofs = np.unique(np.round(np.geomspace(lo, hi, points or 5)).astype(int))

    def interp(frame, x):
        return np.exp(np.interp(np.log(x), np.log(frame['dof'].to_numpy(dtype=float)),
                                np.log(np.clip(frame['ea'].to_numpy(dtype=float), 1e-300, None))))

    ea_a, ea_b = interp(a, dofs), interp(b, dofs)
    return pd.DataFrame({'dof': dofs, 'ea_first': ea_a, 'ea_second': ea_b, 'ratio': ea_a / ea_b})
