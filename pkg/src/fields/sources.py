"""
Source and boundary data
Per-fine-cell sources f and Dirichlet data g as vectorized callables
"""

import logging
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np

from .permeability import load_field_text

logger = logging.getLogger(__name__)

BoundaryFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]

SOURCE_HEADER = 'SOURCE'
NODAL_HEADER = 'NODAL'

DEFAULT_REGIONS = (
    (0.1, 0.1, 0.3, 0.3),
    (0.7, 0.7, 0.9, 0.9),
)


def cell_centers(n: int, x0: float = 0.0, y0: float = 0.0, side: float = 1.0):
    """Centers of an n x n cell lattice as (X, Y) arrays indexed [cy, cx]"""
    h = side / n
    c = (np.arange(n) + 0.5) * h
    return np.meshgrid(x0 + c, y0 + c)


def two_region_source(n: int, amplitude: float = 1.0,
                      regions: Sequence[Sequence[float]] = DEFAULT_REGIONS,
                      domain: Sequence[float] = (0.0, 0.0, 1.0, 1.0)) -> np.ndarray:
    """
    +amplitude inside the first rectangle, -amplitude inside the second, 0 elsewhere

    Rectangles are (x0, y0, x1, y1) in domain coordinates and select cells by
    their centers, like an injector/producer pair.
    """
    if len(regions) != 2:
        raise ValueError(f"two_region source needs exactly 2 regions, got {len(regions)}")
    x0, y0, x1, _ = domain
    X, Y = cell_centers(n, x0, y0, x1 - x0)
    values = np.zeros((n, n))
    for sign, (rx0, ry0, rx1, ry1) in zip((1.0, -1.0), regions):
        inside = (X >= rx0) & (X <= rx1) & (Y >= ry0) & (Y <= ry1)
        values[inside] = sign * amplitude
    return values


def load_or_generate_source(spec: Dict[str, Any], n_cells: int,
                            domain: Sequence[float] = (0.0, 0.0, 1.0, 1.0)) -> Optional[np.ndarray]:
    """
    Per-cell source values, or None for manufactured loads

    Kinds: constant (value), two_region (amplitude, regions), file (path),
    sparse_modes (load built later from eigenfunctions).
    """
    spec = dict(spec or {})
    kind = spec.get('kind', 'constant')

    if kind == 'constant':
        return np.full((n_cells, n_cells), float(spec.get('value', 1.0)))
    if kind == 'two_region':
        return two_region_source(n_cells, float(spec.get('amplitude', 1.0)),
                                 spec.get('regions', DEFAULT_REGIONS), domain)
    if kind == 'file':
        values = load_field_text(spec['path'], header=SOURCE_HEADER)
        if values.shape != (n_cells, n_cells):
            raise ValueError(f"Source file has shape {values.shape}, grid needs ({n_cells}, {n_cells})")
        return values
    if kind == 'sparse_modes':
        return None

    raise ValueError(f"Unknown source kind '{kind}'")


def zero_boundary(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.zeros_like(np.asarray(x, dtype=np.float64))


def bilinear_boundary(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * np.asarray(y, dtype=np.float64)


def nodal_boundary(values: np.ndarray, domain: Sequence[float]) -> BoundaryFunction:
    """Lookup of nodal values on the global (n+1) x (n+1) fine lattice"""
    x0, y0, x1, _ = domain
    n = values.shape[1] - 1
    h = (x1 - x0) / n

    def g(x, y):
        ix = np.clip(np.rint((np.asarray(x) - x0) / h).astype(int), 0, n)
        iy = np.clip(np.rint((np.asarray(y) - y0) / h).astype(int), 0, n)
        return values[iy, ix]

    return g


def load_boundary(spec: Dict[str, Any], n_cells: int,
                  domain: Sequence[float] = (0.0, 0.0, 1.0, 1.0)) -> BoundaryFunction:
    """Dirichlet data: zero, bilinear (g = x*y) or file of nodal values"""
    spec = dict(spec or {})
    kind = spec.get('kind', 'zero')

    if kind == 'zero':
        return zero_boundary
    if kind == 'bilinear':
        return bilinear_boundary
    if kind == 'file':
        values = load_field_text(spec['path'], header=NODAL_HEADER)
        if values.shape != (n_cells + 1, n_cells + 1):
            raise ValueError(f"Boundary file has shape {values.shape}, grid needs "
                             f"({n_cells + 1}, {n_cells + 1})")
        return nodal_boundary(values, domain)

    raise ValueError(f"Unknown boundary kind '{kind}'")
