"""
Source modules for the adaptive GMsDGM solver
"""

__version__ = '1.0.0'
