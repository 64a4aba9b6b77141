"""
Grids, block finite element kernels and the interior penalty DG form
"""

from .dg_form import DGForm, assemble_dg_form, assemble_dg_system
from .grid import Grid, block_topology, build_grid

__all__ = ['DGForm', 'assemble_dg_form', 'assemble_dg_system', 'Grid', 'block_topology', 'build_grid']
