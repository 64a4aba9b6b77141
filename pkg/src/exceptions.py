"""
Error types shared across the solver modules
"""


class SolverError(RuntimeError):
    """A linear solve or factorization failed numerically.

    Raised for a non-converged fine solve, an indefinite reduced system
    (penalty below the coercivity threshold) or a negative energy.
    """
