"""
Coarse/fine grid topology

Square coarse blocks, each refined into nf x nf square fine cells split along
the lower-left to upper-right diagonal. Degrees of freedom are blockwise
(discontinuous across coarse edges): block i owns (nf+1)^2 local nodes,
numbered n = iy*(nf+1) + ix, stored at global offset i*(nf+1)^2.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

SIDES = ('bottom', 'right', 'top', 'left')


@dataclass(frozen=True)
class CoarseEdge:
    """
    One coarse edge

    plus is the lower block index, and the normal points from plus to minus.
    Boundary edges have minus None and an outward normal.
    """
    index: int
    orientation: str
    plus: int
    plus_side: str
    minus: Optional[int]
    minus_side: Optional[str]
    normal: Tuple[float, float]

    @property
    def is_boundary(self) -> bool:
        return self.minus is None


@dataclass(frozen=True)
class BlockTopology:
    """Node sets and coarse edges of one block"""
    index: int
    bx: int
    by: int
    nf: int
    h: float
    origin: Tuple[float, float]
    boundary_nodes: np.ndarray
    interior_nodes: np.ndarray
    side_nodes: Dict[str, np.ndarray]
    edges: Tuple[Tuple[int, bool], ...]

    @property
    def n_nodes(self) -> int:
        return (self.nf + 1) ** 2

    @property
    def cell_origin(self) -> Tuple[int, int]:
        return self.bx * self.nf, self.by * self.nf

    def boundary_positions(self, side: str) -> np.ndarray:
        """Positions of a side's nodes inside the counterclockwise boundary list"""
        return side_positions(self.nf, side)

    def node_coordinates(self) -> np.ndarray:
        ix, iy = np.meshgrid(np.arange(self.nf + 1), np.arange(self.nf + 1))
        return np.column_stack([self.origin[0] + self.h * ix.ravel(),
                                self.origin[1] + self.h * iy.ravel()])


@dataclass(frozen=True)
class Grid:
    Nc: int
    nf: int
    x0: float
    y0: float
    side: float
    edges: Tuple[CoarseEdge, ...] = field(repr=False)

    @property
    def H(self) -> float:
        return self.side / self.Nc

    @property
    def h(self) -> float:
        return self.H / self.nf

    @property
    def n_blocks(self) -> int:
        return self.Nc * self.Nc

    @property
    def nodes_per_block(self) -> int:
        return (self.nf + 1) ** 2

    @property
    def n_dofs(self) -> int:
        return self.n_blocks * self.nodes_per_block

    @property
    def n_cells(self) -> int:
        """Fine cells per axis of the whole domain"""
        return self.Nc * self.nf

    @property
    def domain(self) -> Tuple[float, float, float, float]:
        return self.x0, self.y0, self.x0 + self.side, self.y0 + self.side

    def block_index(self, bx: int, by: int) -> int:
        return by * self.Nc + bx

    def block_coords(self, i: int) -> Tuple[int, int]:
        return i % self.Nc, i // self.Nc

    def block_dofs(self, i: int) -> slice:
        n = self.nodes_per_block
        return slice(i * n, (i + 1) * n)

    def interior_edges(self):
        return [e for e in self.edges if not e.is_boundary]

    def boundary_edges(self):
        return [e for e in self.edges if e.is_boundary]

    def block_edges(self, i: int):
        return [e for e in self.edges if e.plus == i or e.minus == i]

    def edge_points(self, edge: CoarseEdge) -> np.ndarray:
        """Fine node coordinates along an edge, in increasing coordinate"""
        bx, by = self.block_coords(edge.plus)
        ox, oy = self.x0 + bx * self.H, self.y0 + by * self.H
        t = np.arange(self.nf + 1) * self.h
        side = edge.plus_side
        if side == 'bottom':
            return np.column_stack([ox + t, np.full_like(t, oy)])
        if side == 'top':
            return np.column_stack([ox + t, np.full_like(t, oy + self.H)])
        if side == 'left':
            return np.column_stack([np.full_like(t, ox), oy + t])
        return np.column_stack([np.full_like(t, ox + self.H), oy + t])


# ---------------------------------------------------------------------------
# Local lattice numbering
# ---------------------------------------------------------------------------

def side_nodes(nf: int, side: str) -> np.ndarray:
    """Local node indices of one side, increasing coordinate"""
    k = np.arange(nf + 1)
    if side == 'bottom':
        return k
    if side == 'top':
        return nf * (nf + 1) + k
    if side == 'left':
        return k * (nf + 1)
    if side == 'right':
        return k * (nf + 1) + nf
    raise ValueError(f"Unknown side '{side}'")


def lattice_boundary(nx: int, ny: int) -> np.ndarray:
    """
    Boundary nodes of an nx x ny cell lattice, counterclockwise from (0, 0)

    Row length is nx+1. Each corner appears once; the count is 2(nx+ny).
    """
    row = nx + 1
    bottom = np.arange(nx)
    right = np.arange(ny) * row + nx
    top = ny * row + np.arange(nx, 0, -1)
    left = np.arange(ny, 0, -1) * row
    return np.concatenate([bottom, right, top, left])


def lattice_interior(nx: int, ny: int) -> np.ndarray:
    ix, iy = np.meshgrid(np.arange(1, nx), np.arange(1, ny))
    return (iy * (nx + 1) + ix).ravel()


def side_positions(nf: int, side: str) -> np.ndarray:
    """Counterclockwise boundary positions of a side's nodes, increasing coordinate"""
    n_b = 4 * nf
    k = np.arange(nf + 1)
    if side == 'bottom':
        return k
    if side == 'right':
        return nf + k
    if side == 'top':
        return 3 * nf - k
    if side == 'left':
        return (4 * nf - k) % n_b
    raise ValueError(f"Unknown side '{side}'")


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _enumerate_edges(Nc: int) -> Tuple[CoarseEdge, ...]:
    edges = []

    def block(bx, by):
        return by * Nc + bx

    # Vertical edges: x-lines 0..Nc, one edge per block row
    for by in range(Nc):
        for line in range(Nc + 1):
            if line == 0:
                edges.append(('vertical', block(0, by), 'left', None, None, (-1.0, 0.0)))
            elif line == Nc:
                edges.append(('vertical', block(Nc - 1, by), 'right', None, None, (1.0, 0.0)))
            else:
                edges.append(('vertical', block(line - 1, by), 'right',
                              block(line, by), 'left', (1.0, 0.0)))

    # Horizontal edges: y-lines 0..Nc
    for line in range(Nc + 1):
        for bx in range(Nc):
            if line == 0:
                edges.append(('horizontal', block(bx, 0), 'bottom', None, None, (0.0, -1.0)))
            elif line == Nc:
                edges.append(('horizontal', block(bx, Nc - 1), 'top', None, None, (0.0, 1.0)))
            else:
                edges.append(('horizontal', block(bx, line - 1), 'top',
                              block(bx, line), 'bottom', (0.0, 1.0)))

    return tuple(CoarseEdge(k, *e) for k, e in enumerate(edges))


def build_grid(Nc: int, nf: int,
               domain: Sequence[float] = (0.0, 0.0, 1.0, 1.0)) -> Grid:
    """
    Build the coarse/fine grid

    Args:
        Nc: Coarse blocks per axis
        nf: Fine cells per axis per block
        domain: (x0, y0, x1, y1), must be a square

    Returns:
        Grid with the complete coarse edge list
    """
    if int(Nc) != Nc or Nc < 1:
        raise ValueError(f"Nc must be a positive integer, got {Nc}")
    if int(nf) != nf or nf < 2:
        raise ValueError(f"nf must be an integer >= 2, got {nf}")

    x0, y0, x1, y1 = (float(v) for v in domain)
    width, height = x1 - x0, y1 - y0
    if width <= 0 or height <= 0:
        raise ValueError(f"Degenerate domain {tuple(domain)}")
    if not np.isclose(width, height, rtol=1e-12, atol=0.0):
        raise ValueError(f"Domain must be square, got {width} x {height}")

    grid = Grid(int(Nc), int(nf), x0, y0, width, _enumerate_edges(int(Nc)))
    logger.debug(f"Built grid Nc={grid.Nc} nf={grid.nf}: {len(grid.edges)} coarse edges, "
                 f"{len(grid.interior_edges())} interior")
    return grid


def block_topology(grid: Grid, i: int) -> BlockTopology:
    """Node sets and oriented coarse edges of block i"""
    if not 0 <= i < grid.n_blocks:
        raise IndexError(f"Block index {i} out of range [0, {grid.n_blocks})")

    nf = grid.nf
    bx, by = grid.block_coords(i)
    edges = []
    for e in grid.edges:
        if e.plus == i:
            edges.append((e.index, True))
        elif e.minus == i:
            edges.append((e.index, False))

    return BlockTopology(
        index=i,
        bx=bx,
        by=by,
        nf=nf,
        h=grid.h,
        origin=(grid.x0 + bx * grid.H, grid.y0 + by * grid.H),
        boundary_nodes=lattice_boundary(nf, nf),
        interior_nodes=lattice_interior(nf, nf),
        side_nodes={s: side_nodes(nf, s) for s in SIDES},
        edges=tuple(edges),
    )
