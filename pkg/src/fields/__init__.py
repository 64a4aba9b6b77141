"""
Coefficient, source and boundary data
"""

from .permeability import PermeabilityField, load_or_generate_kappa
from .sources import load_boundary, load_or_generate_source

__all__ = ['PermeabilityField', 'load_or_generate_kappa', 'load_boundary', 'load_or_generate_source']
