"""Nested structured fine/coarse grids on the unit square.

Indexing (row-major from the lower-left corner):

* fine cell ``(i, j)`` -> ``j * n + i``
* vertical fine edge at ``x = i*h`` in row ``j`` -> ``j * (n + 1) + i``
* horizontal fine edge at ``y = j*h`` in column ``i`` -> ``n * (n + 1) + j * n + i``

Coarse blocks and coarse edges follow the same pattern with ``N``.
Every edge carries a fixed unit normal: ``+x`` for vertical edges and ``+y``
for horizontal ones.  The "minus" cell of an edge lies behind the normal,
the "plus" cell in front of it (``-1`` outside the domain).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

VERTICAL = "vertical"
HORIZONTAL = "horizontal"


class GridError(ValueError):
    """Invalid grid configuration or query."""


@dataclass(frozen=True)
class CoarseEdge:
    id: int
    orientation: str
    fine_edges: np.ndarray
    blocks: tuple[int, ...]
    boundary: bool

    @property
    def normal(self) -> tuple[float, float]:
        return (1.0, 0.0) if self.orientation == VERTICAL else (0.0, 1.0)

    @property
    def n_fine(self) -> int:
        return len(self.fine_edges)


@dataclass(frozen=True)
class Region:
    """A conforming union of fine cells and its edge sets.

    ``boundary_sign[k]`` is ``+1`` when a positive flux on
    ``boundary_edges[k]`` leaves the region and ``-1`` when it enters.
    """

    cells: np.ndarray
    interior_edges: np.ndarray
    boundary_edges: np.ndarray
    boundary_sign: np.ndarray

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([self.interior_edges, self.boundary_edges])


class GridHierarchy:
    """Fine ``n x n`` grid nested in a coarse ``N x N`` grid on ``(0,1)^2``."""

    def __init__(self, n: int, N: int):
        if n < 2 or N < 2:
            raise GridError(f"need n >= 2 and N >= 2, got n={n}, N={N}")
        if n % N != 0:
            raise GridError(f"fine size n={n} is not divisible by coarse size N={N}")
        if n // N < 2:
            raise GridError(f"ratio n/N must be >= 2, got n={n}, N={N}")
        self.n = int(n)
        self.N = int(N)
        self.h = 1.0 / n
        self.H = 1.0 / N
        self.ratio = n // N
        self.n_cells = n * n
        self.n_vedges = (n + 1) * n
        self.n_edges = 2 * n * (n + 1)
        self.cell_area = self.h * self.h
        self._build_fine()
        self._build_coarse()

    # fine level ---------------------------------------------------------
    def cell(self, i, j):
        return j * self.n + i

    def vedge(self, i, j):
        return j * (self.n + 1) + i

    def hedge(self, i, j):
        return self.n_vedges + j * self.n + i

    def cell_coords(self, c):
        c = np.asarray(c)
        return c % self.n, c // self.n

    def edge_coords(self, e: int) -> tuple[str, int, int]:
        if not 0 <= e < self.n_edges:
            raise GridError(f"edge id {e} out of range")
        if e < self.n_vedges:
            return VERTICAL, e % (self.n + 1), e // (self.n + 1)
        k = e - self.n_vedges
        return HORIZONTAL, k % self.n, k // self.n

    def edge_id(self, orientation: str, i: int, j: int) -> int:
        return self.vedge(i, j) if orientation == VERTICAL else self.hedge(i, j)

    def _build_fine(self):
        n = self.n
        i, j = np.meshgrid(np.arange(n), np.arange(n))
        i, j = i.ravel(), j.ravel()
        # [west, east, south, north]
        self.cell_edges = np.stack(
            [self.vedge(i, j), self.vedge(i + 1, j), self.hedge(i, j), self.hedge(i, j + 1)],
            axis=1,
        )
        edge_cells = -np.ones((self.n_edges, 2), dtype=np.int64)
        c = self.cell(i, j)
        edge_cells[self.cell_edges[:, 1], 0] = c
        edge_cells[self.cell_edges[:, 0], 1] = c
        edge_cells[self.cell_edges[:, 3], 0] = c
        edge_cells[self.cell_edges[:, 2], 1] = c
        self.edge_cells = edge_cells
        self.cell_centers = np.stack([(i + 0.5) * self.h, (j + 0.5) * self.h], axis=1)
        self.cell_block = (j // self.ratio) * self.N + (i // self.ratio)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero((self.edge_cells < 0).any(axis=1))

    @cached_property
    def coarse_line_edges(self) -> np.ndarray:
        """Fine edges lying on coarse-grid lines."""
        return np.concatenate([e.fine_edges for e in self.coarse_edges])

    # coarse level -------------------------------------------------------
    def block(self, I, J):
        return J * self.N + I

    def block_cells(self, K: int) -> np.ndarray:
        r = self.ratio
        I, J = K % self.N, K // self.N
        ii, jj = np.meshgrid(np.arange(I * r, (I + 1) * r), np.arange(J * r, (J + 1) * r))
        return self.cell(ii.ravel(), jj.ravel())

    def _build_coarse(self):
        N, r = self.N, self.ratio
        edges = []
        for J in range(N):
            for I in range(N + 1):
                fine = np.array([self.vedge(I * r, J * r + k) for k in range(r)])
                blocks = tuple(self.block(b, J) for b in (I - 1, I) if 0 <= b < N)
                edges.append(CoarseEdge(len(edges), VERTICAL, fine, blocks, len(blocks) == 1))
        for J in range(N + 1):
            for I in range(N):
                fine = np.array([self.hedge(I * r + k, J * r) for k in range(r)])
                blocks = tuple(self.block(I, b) for b in (J - 1, J) if 0 <= b < N)
                edges.append(CoarseEdge(len(edges), HORIZONTAL, fine, blocks, len(blocks) == 1))
        self.coarse_edges: list[CoarseEdge] = edges
        self.n_coarse_edges = len(edges)
        self.interior_coarse_edges = [e for e in edges if not e.boundary]

    @property
    def n_blocks(self) -> int:
        return self.N * self.N

    # neighborhoods ------------------------------------------------------
    def neighborhood(self, edge: CoarseEdge) -> np.ndarray:
        """Fine cells of the coarse blocks sharing ``edge``, sorted."""
        return np.sort(np.concatenate([self.block_cells(K) for K in edge.blocks]))

    def oversampled_neighborhood(self, edge: CoarseEdge, layers: int | None = None) -> np.ndarray:
        """``neighborhood(edge)`` grown by ``layers`` rings of fine cells, clipped to the domain.

        ``layers`` defaults to ``ratio // 2``.
        """
        if layers is None:
            layers = max(1, self.ratio // 2)
        if layers < 1:
            raise GridError(f"oversampling needs layers >= 1, got {layers}")
        i0, i1, j0, j1 = self.cell_box(self.neighborhood(edge))
        i0, j0 = max(0, i0 - layers), max(0, j0 - layers)
        i1, j1 = min(self.n, i1 + layers), min(self.n, j1 + layers)
        ii, jj = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1))
        return np.sort(self.cell(ii.ravel(), jj.ravel()))

    def cell_box(self, cells) -> tuple[int, int, int, int]:
        """Half-open index bounding box ``(i0, i1, j0, j1)`` of ``cells``."""
        i, j = self.cell_coords(cells)
        return int(i.min()), int(i.max()) + 1, int(j.min()), int(j.max()) + 1

    def region(self, cells) -> Region:
        cells = np.unique(np.asarray(cells, dtype=np.int64))
        inside = np.zeros(self.n_cells + 1, dtype=bool)  # slot -1 stays False
        inside[cells] = True
        minus_in = inside[self.edge_cells[:, 0]]
        plus_in = inside[self.edge_cells[:, 1]]
        interior = np.flatnonzero(minus_in & plus_in)
        boundary = np.flatnonzero(minus_in ^ plus_in)
        sign = np.where(minus_in[boundary], 1.0, -1.0)
        return Region(cells, interior, boundary, sign)


def build_hierarchy(n: int, N: int) -> GridHierarchy:
    return GridHierarchy(n, N)
