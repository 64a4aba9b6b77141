"""
Orchestrator Module for GMsDGM experiments
"""

from .experiment_config import ConfigLoader, ExperimentConfig, validate_experiment
from .experiment_runner import ExperimentRunner, compare, diag_eigs

__all__ = ['ConfigLoader', 'ExperimentConfig', 'validate_experiment',
           'ExperimentRunner', 'compare', 'diag_eigs']
