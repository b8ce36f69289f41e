"""Per-coarse-edge snapshot fields and the global snapshot coefficient matrix."""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .fine import LocalProblem, SaddleSystem
from .grid import CoarseEdge, GridHierarchy


class BlockSolvers:
    """Lazily factorized local mixed problems, one per coarse block."""

    def __init__(self, system: SaddleSystem):
        self.system = system
        self._problems: dict[int, LocalProblem] = {}

    def __getitem__(self, K: int) -> LocalProblem:
        if K not in self._problems:
            self._problems[K] = LocalProblem(self.system, self.system.grid.block_cells(K))
        return self._problems[K]

    def prepare(self, blocks, threads: int = 1):
        todo = [K for K in blocks if K not in self._problems]
        if threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(threads) as pool:
                made = list(pool.map(lambda K: LocalProblem(self.system, self.system.grid.block_cells(K)), todo))
        else:
            made = [LocalProblem(self.system, self.system.grid.block_cells(K)) for K in todo]
        self._problems.update(zip(todo, made))


@dataclass
class FieldBlock:
    """Velocity fields supported in the neighborhood of one coarse edge.

    ``flux[:, k]`` lists fine-edge fluxes on ``edges``; ``pressure[:, k]``
    the zero-mean-per-block pressures on ``cells``; ``alpha[b, k]`` the
    constant divergence on ``edge.blocks[b]``.
    """

    edge: CoarseEdge
    cells: np.ndarray
    edges: np.ndarray
    flux: np.ndarray
    pressure: np.ndarray
    alpha: np.ndarray

    @property
    def size(self) -> int:
        return self.flux.shape[1]

    def combine(self, Z) -> FieldBlock:
        Z = np.asarray(Z, dtype=float).reshape(self.size, -1)
        return replace(self, flux=self.flux @ Z, pressure=self.pressure @ Z, alpha=self.alpha @ Z)

    def trace(self, grid: GridHierarchy) -> np.ndarray:
        """Pointwise normal component ``v.m_i`` on the fine edges of the coarse edge."""
        pos = np.searchsorted(self.edges, self.edge.fine_edges)
        return self.flux[pos] / grid.h

    def global_flux(self, grid: GridHierarchy, col: int) -> np.ndarray:
        out = np.zeros(grid.n_edges)
        out[self.edges] = self.flux[:, col]
        return out


def edge_fields(solvers: BlockSolvers, edge: CoarseEdge, traces) -> FieldBlock:
    """Fields in ``omega_i`` with prescribed normal trace on the coarse edge, zero flux elsewhere.

    Each adjacent block is solved separately with the constant divergence
    that makes its Neumann problem compatible.
    """
    if edge.boundary:
        raise ValueError(f"coarse edge {edge.id} lies on the domain boundary")
    system = solvers.system
    grid = system.grid
    traces = np.asarray(traces, dtype=float).reshape(edge.n_fine, -1)
    k = traces.shape[1]
    nbhd = grid.region(grid.neighborhood(edge))
    edges = np.sort(nbhd.edges)
    flux = np.zeros((len(edges), k))
    pressure = np.zeros((len(nbhd.cells), k))
    alpha = np.zeros((len(edge.blocks), k))
    edge_flux = grid.h * traces
    block_area = grid.H * grid.H
    for b, K in enumerate(edge.blocks):
        problem = solvers[K]
        reg = problem.region
        # edge normal leaves the first ("minus") block and enters the second
        sign = 1.0 if b == 0 else -1.0
        ub = np.zeros((len(reg.boundary_edges), k))
        ub[np.searchsorted(reg.boundary_edges, edge.fine_edges)] = edge_flux
        alpha[b] = sign * edge_flux.sum(axis=0) / block_area
        u, p = problem.solve(ub, np.broadcast_to(alpha[b], (len(reg.cells), k)))
        flux[np.searchsorted(edges, reg.edges)] = u
        pressure[np.searchsorted(nbhd.cells, reg.cells)] = p
    return FieldBlock(edge, nbhd.cells, edges, flux, pressure, alpha)


def build_edge_snapshots(solvers: BlockSolvers, edge: CoarseEdge) -> FieldBlock:
    """Unit-flux snapshots: the ``j``-th field has normal trace ``delta_j`` on the edge."""
    return edge_fields(solvers, edge, np.eye(edge.n_fine))


@dataclass
class SnapshotSpace:
    grid: GridHierarchy
    blocks: list[FieldBlock]

    @property
    def size(self) -> int:
        return sum(b.size for b in self.blocks)

    @property
    def R(self) -> sp.csc_matrix:
        return assemble_R(self.grid, self.blocks)


def build_snapshot_space(system: SaddleSystem, threads: int = 1, solvers: BlockSolvers | None = None) -> SnapshotSpace:
    grid = system.grid
    solvers = solvers or BlockSolvers(system)
    solvers.prepare(range(grid.n_blocks), threads)
    edges = grid.interior_coarse_edges
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            blocks = list(pool.map(lambda e: build_edge_snapshots(solvers, e), edges))
    else:
        blocks = [build_edge_snapshots(solvers, e) for e in edges]
    return SnapshotSpace(grid, blocks)


def assemble_R(grid: GridHierarchy, blocks: list[FieldBlock]) -> sp.csc_matrix:
    """Stack field blocks as columns of a fine-edge coefficient matrix, ordered by edge then local index."""
    rows, cols, vals = [], [], []
    offset = 0
    for blk in blocks:
        r, c = np.nonzero(blk.flux)
        rows.append(blk.edges[r])
        cols.append(c + offset)
        vals.append(blk.flux[r, c])
        offset += blk.size
    if not rows:
        return sp.csc_matrix((grid.n_edges, 0))
    return sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.n_edges, offset)
    )


def column_edges(blocks: list[FieldBlock]) -> np.ndarray:
    """Coarse-edge id of every column of the assembled matrix."""
    return np.concatenate([np.full(b.size, b.edge.id) for b in blocks]) if blocks else np.zeros(0, int)


def dump_R(path, grid: GridHierarchy, R: sp.spmatrix):
    """Write ``R`` as: three little-endian int64 (n, N, columns), then column-major float64 data."""
    dense = np.asarray(R.todense(), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<3q", grid.n, grid.N, dense.shape[1]))
        fh.write(dense.tobytes(order="F"))


def load_R(path) -> tuple[int, int, np.ndarray]:
    with open(path, "rb") as fh:
        n, N, m = struct.unpack("<3q", fh.read(24))
        data = np.frombuffer(fh.read(), dtype="<f8")
    return n, N, data.reshape((-1, m), order="F")
