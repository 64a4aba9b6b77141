"""
A-posteriori indicators and enrichment strategies
"""

from .adaptive import AdaptiveConfig, ProblemContext, run_strategy
from .indicators import IndicatorSet, compute_indicators

__all__ = ['AdaptiveConfig', 'ProblemContext', 'run_strategy', 'IndicatorSet', 'compute_indicators']
