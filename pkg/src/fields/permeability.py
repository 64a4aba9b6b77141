"""
Permeability Field Module
Cell-wise high-contrast coefficients: generators and file I/O
"""

import inspect
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

BINARY_MAGIC = b'GMSKAPPA'
TEXT_HEADER = 'KAPPA'


@dataclass(frozen=True)
class PermeabilityField:
    """Per-fine-cell coefficient, values[cy, cx] with cy the row from the bottom"""
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"Permeability must be a 2D cell array, got shape {values.shape}")
        object.__setattr__(self, 'values', values)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def contrast(self) -> float:
        return float(self.values.max() / self.values.min())

    def block_cells(self, cx0: int, cy0: int, nx: int, ny: int) -> np.ndarray:
        """Cells of a rectangular window, origin (cx0, cy0)"""
        return self.values[cy0:cy0 + ny, cx0:cx0 + nx]

    def check_lower_bound(self, bound: float = 1.0) -> None:
        """Reject any cell below bound, naming the first offending cell"""
        bad = np.argwhere(~(self.values >= bound))
        if len(bad):
            cy, cx = bad[0]
            raise ValueError(
                f"Permeability {self.values[cy, cx]!r} below {bound} at cell (cx={cx}, cy={cy})"
            )


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def constant_field(n: int, value: float = 1.0) -> PermeabilityField:
    return PermeabilityField(np.full((n, n), float(value)))


def channels_field(n: int, contrast: float = 1e4, seed: int = 0,
                   count: int = 8, width: Optional[int] = None) -> PermeabilityField:
    """
    Background 1 crossed by horizontal and vertical high-permeability strips

    Strips have random position, orientation, start and length (between 30% and
    90% of the domain), so they cut through coarse blocks and end inside them.
    """
    rng = np.random.default_rng(seed)
    width = width or max(1, n // 32)
    values = np.ones((n, n))

    for _ in range(count):
        horizontal = rng.random() < 0.5
        length = int(rng.integers(max(1, int(0.3 * n)), max(2, int(0.9 * n)) + 1))
        start = int(rng.integers(0, max(1, n - length) + 1))
        offset = int(rng.integers(0, max(1, n - width) + 1))
        if horizontal:
            values[offset:offset + width, start:start + length] = contrast
        else:
            values[start:start + length, offset:offset + width] = contrast

    return PermeabilityField(values)


def inclusions_field(n: int, contrast: float = 1e4, seed: int = 0,
                     count: int = 20, size: Optional[int] = None) -> PermeabilityField:
    """Background 1 with randomly placed square inclusions of value contrast"""
    rng = np.random.default_rng(seed)
    size = size or max(1, n // 16)
    values = np.ones((n, n))

    for _ in range(count):
        cx = int(rng.integers(0, max(1, n - size) + 1))
        cy = int(rng.integers(0, max(1, n - size) + 1))
        values[cy:cy + size, cx:cx + size] = contrast

    return PermeabilityField(values)


GENERATORS = {
    'constant': constant_field,
    'channels': channels_field,
    'inclusions': inclusions_field,
}


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def save_field_text(path: Union[str, Path], values: np.ndarray, header: str = TEXT_HEADER) -> None:
    """Write '<HEADER> nx ny' then the values row-major, 17 significant digits"""
    values = np.asarray(values, dtype=np.float64)
    ny, nx = values.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        f.write(f"{header} {nx} {ny}\n")
        np.savetxt(f, values, fmt='%.17g')


def load_field_text(path: Union[str, Path], header: str = TEXT_HEADER) -> np.ndarray:
    with open(path, 'r') as f:
        tokens = f.read().split()
    if len(tokens) < 3 or tokens[0] != header:
        raise ValueError(f"{path}: expected header '{header} nx ny'")
    nx, ny = int(tokens[1]), int(tokens[2])
    data = np.array([float(t) for t in tokens[3:]], dtype=np.float64)
    if data.size != nx * ny:
        raise ValueError(f"{path}: header announces {nx * ny} values, found {data.size}")
    return data.reshape(ny, nx)


def save_kappa_binary(path: Union[str, Path], field: PermeabilityField) -> None:
    """8-byte magic, two little-endian int64 counts (nx, ny), then LE float64 cells"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(BINARY_MAGIC)
        f.write(struct.pack('<qq', field.nx, field.ny))
        f.write(field.values.astype('<f8').tobytes(order='C'))


def load_kappa_binary(path: Union[str, Path]) -> PermeabilityField:
    with open(path, 'rb') as f:
        magic = f.read(8)
        if magic != BINARY_MAGIC:
            raise ValueError(f"{path}: not a binary permeability file")
        nx, ny = struct.unpack('<qq', f.read(16))
        data = np.frombuffer(f.read(), dtype='<f8')
    if data.size != nx * ny:
        raise ValueError(f"{path}: header announces {nx * ny} values, found {data.size}")
    field = PermeabilityField(data.reshape(ny, nx).astype(np.float64))
    field.check_lower_bound()
    return field


def save_kappa(path: Union[str, Path], field: PermeabilityField) -> None:
    if str(path).endswith('.bin'):
        save_kappa_binary(path, field)
    else:
        save_field_text(path, field.values)


def load_kappa(path: Union[str, Path]) -> PermeabilityField:
    if str(path).endswith('.bin'):
        return load_kappa_binary(path)
    field = PermeabilityField(load_field_text(path))
    field.check_lower_bound()
    return field


def load_or_generate_kappa(spec: Dict[str, Any], n_cells: int) -> PermeabilityField:
    """
    Build the permeability described by a config section

    Args:
        spec: {'kind': constant|channels|inclusions|file, ...generator args}
        n_cells: Fine cells per axis of the domain

    Returns:
        Field with every value >= 1
    """
    spec = dict(spec or {})
    kind = spec.pop('kind', 'constant')

    if kind == 'file':
        field = load_kappa(spec['path'])
        if field.shape != (n_cells, n_cells):
            raise ValueError(f"Permeability file has shape {field.shape}, grid needs "
                             f"({n_cells}, {n_cells})")
        return field

    if kind not in GENERATORS:
        raise ValueError(f"Unknown permeability generator '{kind}'. "
                         f"Available: {sorted(GENERATORS) + ['file']}")

    generator = GENERATORS[kind]
    accepted = inspect.signature(generator).parameters
    ignored = sorted(k for k in spec if k not in accepted)
    if ignored:
        logger.debug(f"Generator {kind} ignores {ignored}")
    field = generator(n_cells, **{k: v for k, v in spec.items() if k in accepted})
    field.check_lower_bound()
    logger.info(f"Generated {kind} permeability on {n_cells}x{n_cells} cells, "
                f"contrast {field.contrast:.3g}")
    return field
