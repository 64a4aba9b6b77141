"""
Convergence analysis of strategy histories
"""
