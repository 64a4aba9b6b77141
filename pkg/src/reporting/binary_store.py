"""
Flat binary containers for offline data and solution fields

Offline file: 8-byte magic, int64 container count, then per container an
int64 header (block, kind, rows, cols) followed by rows*cols little-endian
float64 values in column-major order. Field file: 8-byte magic, int64
length, little-endian float64 values.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np

from ..multiscale.spectral import BlockSpectra

logger = logging.getLogger(__name__)

OFFLINE_MAGIC = b'GMSOFFLN'
FIELD_MAGIC = b'GMSFIELD'
HEADER = struct.Struct('<qqqq')
COUNT = struct.Struct('<q')

KIND_CODES = {
    'harmonic': 1,
    'interior': 2,
    'oversampled': 3,
    'eigenvalues1': 10,
    'eigenfunctions1': 11,
    'eigenvalues2': 20,
    'eigenfunctions2': 21,
}
KIND_NAMES = {code: name for name, code in KIND_CODES.items()}


@dataclass(frozen=True)
class Container:
    block: int
    kind: str
    data: np.ndarray

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def _as_matrix(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return values.reshape(-1, 1) if values.ndim == 1 else values


def write_containers(path: Union[str, Path], containers: Sequence[Container]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(OFFLINE_MAGIC)
        f.write(COUNT.pack(len(containers)))
        for c in containers:
            data = _as_matrix(c.data)
            f.write(HEADER.pack(c.block, KIND_CODES[c.kind], data.shape[0], data.shape[1]))
            f.write(data.astype('<f8').tobytes(order='F'))
    logger.debug(f"Wrote {len(containers)} containers to {path}")
    return path


def read_containers(path: Union[str, Path]) -> List[Container]:
    with open(path, 'rb') as f:
        if f.read(8) != OFFLINE_MAGIC:
            raise ValueError(f"{path}: not an offline container file")
        (count,) = COUNT.unpack(f.read(COUNT.size))
        containers = []
        for _ in range(count):
            block, code, rows, cols = HEADER.unpack(f.read(HEADER.size))
            if code not in KIND_NAMES:
                raise ValueError(f"{path}: unknown container kind {code}")
            raw = f.read(8 * rows * cols)
            if len(raw) != 8 * rows * cols:
                raise ValueError(f"{path}: truncated container for block {block}")
            data = np.frombuffer(raw, dtype='<f8').reshape((rows, cols), order='F')
            containers.append(Container(block, KIND_NAMES[code], data.astype(np.float64)))
    return containers


def spectra_containers(spectra: Iterable[BlockSpectra]) -> List[Container]:
    """Snapshot bases, eigenvalues and eigenfunctions of every block"""
    containers = []
    for s in spectra:
        containers.append(Container(s.index, s.snapshot1.kind, s.snapshot1.basis))
        containers.append(Container(s.index, 'eigenvalues1', _as_matrix(s.eig1.eigenvalues)))
        containers.append(Container(s.index, 'eigenfunctions1', s.eig1.functions))
        if s.eig2 is not None:
            containers.append(Container(s.index, 'eigenvalues2', _as_matrix(s.eig2.eigenvalues)))
            containers.append(Container(s.index, 'eigenfunctions2', s.eig2.functions))
    return containers


def save_offline(path: Union[str, Path], spectra: Iterable[BlockSpectra]) -> Path:
    return write_containers(path, spectra_containers(spectra))


def save_field(path: Union[str, Path], values: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(values, dtype=np.float64).ravel()
    with open(path, 'wb') as f:
        f.write(FIELD_MAGIC)
        f.write(COUNT.pack(values.size))
        f.write(values.astype('<f8').tobytes())
    return path


def load_field(path: Union[str, Path]) -> np.ndarray:
    with open(path, 'rb') as f:
        if f.read(8) != FIELD_MAGIC:
            raise ValueError(f"{path}: not a solution field file")
        (n,) = COUNT.unpack(f.read(COUNT.size))
        data = np.frombuffer(f.read(), dtype='<f8')
    if data.size != n:
        raise ValueError(f"{path}: header announces {n} values, found {data.size}")
    return data.astype(np.float64)
