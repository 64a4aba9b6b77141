"""
Convergence reports, history analysis and binary stores.

Proves:
 Group 1 - Analysis
   1. Errors shrinking by 0.4 per step rate as FAST and EXCELLENT
   2. Growth without removal is flagged as a monotonicity violation
   3. Removal growth is measured against the configured limit
   4. Matched-DOF comparison interpolates power laws exactly

 Group 2 - Reports
   5. History CSVs carry the fixed column set and no wall time
   6. Comparison frames stack histories in long format

 Group 3 - Binary stores
   7. Offline containers keep block, kind and shape of every array
   8. Files with a foreign magic are rejected
"""

import numpy as np
import pandas as pd
import pytest

from src.adaptivity.adaptive import ConvergenceRecord
from src.analysis.convergence_analyzer import ConvergenceAnalyzer, matched_dof_comparison
from src.reporting.binary_store import (
    Container, load_field, read_containers, save_field, save_offline, write_containers,
)
from src.reporting.convergence_report import (
    HISTORY_COLUMNS, ConvergenceReport, comparison_frame, history_frame, read_history,
)


def _history(ea, dof=None, removed=None, eta2=None):
    n = len(ea)
    dof = dof or [8 * (m + 1) for m in range(n)]
    return pd.DataFrame({
        'm': range(n),
        'strategy': 'adaptive',
        'dof': dof,
        'e2': np.asarray(ea) / 2,
        'ea': ea,
        'e2_snap': np.nan,
        'ea_snap': np.nan,
        'energy_error2': np.asarray(ea) ** 2,
        'sum_eta2': eta2 if eta2 is not None else 2 * np.asarray(ea) ** 2,
        'k_marked': 1,
        'n_added': 1,
        'n_removed': removed or [0] * n,
        'converged': False,
    })


def _records(n=3):
    return [ConvergenceRecord(m, 'uniform', 8 * (m + 1), 0.1 / (m + 1), 0.2 / (m + 1), None, None,
                              0.04, 0.1, 0, 8, 0, m == n - 1, seconds=0.5) for m in range(n)]


# ── Group 1: analysis ─────────────────────────────────────────────────────────

def test_fast_contraction():
    analysis = ConvergenceAnalyzer().analyze(_history([1.0, 0.4, 0.16, 0.064]))
    assert analysis['contraction']['pattern'] == 'FAST'
    assert analysis['contraction']['mean'] == pytest.approx(0.4)
    assert analysis['monotonicity']['monotone']
    assert analysis['effectivity']['quality'] == 'RELIABLE'
    assert analysis['overall_rating'] == 'EXCELLENT'
    assert analysis['final']['dof'] == 32


def test_growth_without_removal_flagged():
    analyzer = ConvergenceAnalyzer()
    analysis = analyzer.analyze(_history([1.0, 0.9, 0.95]))
    assert analysis['monotonicity']['violations'] == [2]
    assert analysis['overall_rating'] == 'POOR'
    assert any('penalty' in r for r in analyzer.generate_recommendations(analysis))


def test_removal_growth_limit():
    analyzer = ConvergenceAnalyzer(removal_growth_limit=0.1)
    removal = analyzer.removal_growth(_history([1.0, 0.5, 0.6, 0.3], removed=[0, 3, 0, 0]))
    assert len(removal['events']) == 1
    assert removal['events'][0]['growth'] == pytest.approx(0.2)
    assert not removal['all_within_limit']
    # Growth after a removal step is not a monotonicity violation
    assert analyzer.analyze_monotonicity(_history([1.0, 0.5, 0.6], removed=[0, 3, 0]))['monotone']


def test_empty_history():
    analyzer = ConvergenceAnalyzer()
    analysis = analyzer.analyze(_history([])[:0])
    assert analysis['status'] == 'NO_DATA'
    assert analyzer.generate_recommendations(analysis) == []


def test_matched_dof_comparison():
    dof = [10, 20, 40, 80]
    first = _history([1.0 / d for d in dof], dof=dof)
    second = _history([2.0 / d for d in dof], dof=dof)
    matched = matched_dof_comparison(first, second, points=4)
    np.testing.assert_allclose(matched['ratio'], 0.5)
    assert matched['dof'].min() == 10 and matched['dof'].max() == 80

    disjoint = matched_dof_comparison(first, _history([1.0], dof=[500]))
    assert disjoint.empty


# ── Group 2: reports ──────────────────────────────────────────────────────────

def test_history_csv(tmp_path):
    report = ConvergenceReport('unit', _records(), tmp_path)
    path = report.write_history()
    history = read_history(path)
    assert list(history.columns) == HISTORY_COLUMNS
    assert history['dof'].tolist() == [8, 16, 24]
    assert history['ea'].iloc[1] == 0.1
    assert 'seconds' not in path.read_text()
    assert read_history(report.write_timings())['seconds'].tolist() == [0.5] * 3
    assert report.write_indicators() == []


def test_summary_text(tmp_path):
    report = ConvergenceReport('unit', _records(), tmp_path)
    summary = report.format_summary({'overall_rating': 'GOOD', 'monotonicity': {'monotone': True},
                                     'effectivity': {'spread': 2.0}})
    assert 'UNIT' in summary and 'GOOD' in summary
    assert 'e2_snap' not in report.format_table()
    assert report.save_summary().read_text().startswith('     DOF')


def test_comparison_frame():
    frame = comparison_frame({'a': history_frame(_records(2)), 'b': history_frame(_records(3))})
    assert list(frame.columns) == ['experiment', 'strategy', 'm', 'dof', 'ea', 'e2']
    assert frame['experiment'].tolist() == ['a', 'a', 'b', 'b', 'b']
    assert comparison_frame({}).empty


# ── Group 3: binary stores ────────────────────────────────────────────────────

def test_offline_containers(tmp_path, unit_spectra):
    path = save_offline(tmp_path / 'offline.bin', unit_spectra)
    containers = read_containers(path)
    assert len(containers) == 5 * len(unit_spectra)
    by_kind = {(c.block, c.kind): c.data for c in containers}
    np.testing.assert_array_equal(by_kind[(2, 'eigenfunctions1')], unit_spectra[2].eig1.functions)
    assert by_kind[(0, 'eigenvalues2')].shape == (9, 1)
    assert by_kind[(3, 'harmonic')].shape == (25, 16)


def test_column_major_layout(tmp_path):
    data = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    path = write_containers(tmp_path / 'c.bin', [Container(7, 'interior', data)])
    raw = np.frombuffer(path.read_bytes()[8 + 8 + 32:], '<f8')
    np.testing.assert_array_equal(raw, [1, 3, 5, 2, 4, 6])


def test_foreign_files_rejected(tmp_path):
    field = save_field(tmp_path / 'u.bin', np.arange(5.0))
    np.testing.assert_array_equal(load_field(field), np.arange(5.0))
    with pytest.raises(ValueError):
        read_containers(field)
    offline = write_containers(tmp_path / 'o.bin', [])
    with pytest.raises(ValueError):
        load_field(offline)
