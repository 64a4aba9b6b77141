"""
Snapshot spaces, local spectral problems and reduced solves
"""

from .solve import Solution, solve_coarse, solve_fine
from .spectral import BlockSpectra, OfflineState, compute_block_spectra

__all__ = ['Solution', 'solve_coarse', 'solve_fine', 'BlockSpectra', 'OfflineState',
           'compute_block_spectra']
