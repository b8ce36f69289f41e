"""Local spectral problems on per-edge field blocks and offline basis selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .fine import SaddleSystem
from .grid import HORIZONTAL, GridHierarchy
from .snapshot import FieldBlock, SnapshotSpace, assemble_R

SPECTRAL_1 = "spectral-1"
SPECTRAL_2 = "spectral-2"
CURL = "curl"
KINDS = (SPECTRAL_1, SPECTRAL_2, CURL)
MULTIPLICITY_TOL = 1e-9


class DegeneratePencilError(np.linalg.LinAlgError):
    pass


@dataclass
class LocalPencil:
    A: np.ndarray
    S: np.ndarray
    kind: str

    @property
    def swapped(self) -> bool:
        # the pressure-jump form may be singular; A is the SPD side there
        return self.kind == SPECTRAL_2


@dataclass
class EdgeSelection:
    block: FieldBlock
    eigenvalues: np.ndarray
    Z: np.ndarray
    count: int

    @property
    def next_eigenvalue(self) -> float:
        lam = self.eigenvalues
        return float(lam[self.count]) if self.count < len(lam) else np.inf


@dataclass
class OfflineSpace:
    grid: GridHierarchy
    selections: list[EdgeSelection]
    kind: str

    @property
    def blocks(self) -> list[FieldBlock]:
        return [s.block.combine(s.Z) for s in self.selections]

    @property
    def size(self) -> int:
        return sum(s.count for s in self.selections)

    @property
    def R(self) -> sp.csc_matrix:
        return assemble_R(self.grid, self.blocks)

    @property
    def Lambda(self) -> float:
        """Smallest first-discarded eigenvalue over all edges."""
        return min((s.next_eigenvalue for s in self.selections), default=np.inf)


def edge_kinv(system: SaddleSystem, fine_edges) -> np.ndarray:
    """``kappa^{-1}`` on fine edges: mean of the two adjacent cell values."""
    cells = system.grid.edge_cells[fine_edges]
    kinv = system.kinv
    vals = np.where(cells >= 0, kinv[np.maximum(cells, 0)], np.nan)
    return np.nanmean(vals, axis=1)


def curl_operator(system: SaddleSystem, block: FieldBlock) -> sp.csr_matrix:
    """Discrete ``curl(kappa^{-1} v)`` at interior fine vertices of the neighborhood.

    Row ``v`` is the circulation of ``kappa^{-1} v`` around the dual cell of
    vertex ``v`` divided by its area ``h^2``; columns follow ``block.edges``.
    """
    grid = system.grid
    i0, i1, j0, j1 = grid.cell_box(block.cells)
    ii, jj = np.meshgrid(np.arange(i0 + 1, i1), np.arange(j0 + 1, j1))
    ii, jj = ii.ravel(), jj.ravel()
    around = [
        (grid.hedge(ii, jj), 1.0),  # right of the vertex
        (grid.hedge(ii - 1, jj), -1.0),  # left
        (grid.vedge(ii, jj), -1.0),  # above
        (grid.vedge(ii, jj - 1), 1.0),  # below
    ]
    rows, cols, vals = [], [], []
    for e, s in around:
        rows.append(np.arange(len(ii)))
        cols.append(np.searchsorted(block.edges, e))
        vals.append(s * edge_kinv(system, e) / grid.h ** 2)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(len(ii), len(block.edges))
    )


def pressure_jumps(grid: GridHierarchy, block: FieldBlock) -> np.ndarray:
    """Pressure jump (minus side minus plus side) across each fine edge of the coarse edge."""
    ec = grid.edge_cells[block.edge.fine_edges]
    lo = np.searchsorted(block.cells, ec[:, 0])
    hi = np.searchsorted(block.cells, ec[:, 1])
    return block.pressure[lo] - block.pressure[hi]


def build_pencil(kind: str, block: FieldBlock, system: SaddleSystem) -> LocalPencil:
    if kind not in KINDS:
        raise ValueError(f"unknown spectral problem {kind!r}; choose from {KINDS}")
    grid = system.grid
    F = block.flux
    mass = F.T @ (system.M[block.edges][:, block.edges] @ F)
    if kind == SPECTRAL_1:
        T = block.trace(grid)
        w = grid.h * edge_kinv(system, block.edge.fine_edges)
        A = T.T @ (w[:, None] * T)
        D = system.B[block.cells][:, block.edges] @ F
        S = mass + D.T @ D / grid.cell_area
    elif kind == SPECTRAL_2:
        if block.pressure is None or block.pressure.size == 0:
            raise ValueError("spectral-2 needs the snapshot pressures")
        A = mass
        jump = pressure_jumps(grid, block)
        S = jump.T @ (grid.h * jump)
    else:
        C = curl_operator(system, block) @ F
        A = C.T @ C * grid.cell_area
        S = mass
    return LocalPencil(0.5 * (A + A.T), 0.5 * (S + S.T), kind)


def _check_spd(X: np.ndarray, what: str):
    try:
        la.cholesky(X, lower=True)
    except la.LinAlgError as exc:
        raise DegeneratePencilError(f"{what} is not positive definite on the field block") from exc


def solve_pencil(pencil: LocalPencil) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of ``A z = lambda S z`` with ascending ``lambda``.

    Eigenvectors are orthonormal in the SPD member of the pencil.  For the
    pressure-jump pencil ``S z = mu A z`` is solved and ``lambda = 1/mu``
    with ``mu = 0`` reported as ``inf`` (ordered last).
    """
    A, S = pencil.A, pencil.S
    if pencil.swapped:
        _check_spd(A, "A")
        mu, Z = la.eigh(S, A)
        mu, Z = mu[::-1], Z[:, ::-1]
        cutoff = 1e-13 * max(np.abs(mu).max(initial=0.0), 1e-300)
        with np.errstate(divide="ignore"):
            lam = np.where(mu > cutoff, 1.0 / np.where(mu > cutoff, mu, 1.0), np.inf)
    else:
        _check_spd(S, "S")
        lam, Z = la.eigh(A, S)
    _check_residuals(A, S, lam, Z)
    return lam, Z


def _check_residuals(A, S, lam, Z, tol: float = 1e-10):
    nA, nS = np.linalg.norm(A, 2), np.linalg.norm(S, 2)
    for k in np.flatnonzero(np.isfinite(lam)):
        z = Z[:, k]
        r = np.linalg.norm(A @ z - lam[k] * (S @ z))
        if r > tol * (nA + abs(lam[k]) * nS) * max(np.linalg.norm(z), 1.0):
            raise np.linalg.LinAlgError(f"eigenpair {k} residual {r:.2e} too large")


def selection_count(lam: np.ndarray, l: int, tol: float = MULTIPLICITY_TOL) -> int:
    """``l`` grown to cover the whole eigenspace of ``lam[l-1]``."""
    if not 1 <= l <= len(lam):
        raise ValueError(f"requested {l} basis functions, edge block has {len(lam)}")
    count = l
    while count < len(lam) and _same(lam[count - 1], lam[count], tol):
        count += 1
    return count


def _same(a: float, b: float, tol: float) -> bool:
    if np.isinf(a) or np.isinf(b):
        return a == b
    return abs(b - a) <= tol * max(abs(a), abs(b))


def constant_trace_vector(grid: GridHierarchy, block: FieldBlock) -> np.ndarray:
    """Coefficients of the field whose normal trace on the coarse edge is identically 1."""
    T = block.trace(grid)
    c, *_ = np.linalg.lstsq(T, np.ones(T.shape[0]), rcond=None)
    return c


def select_offline(pencil: LocalPencil, l: int, block: FieldBlock | None = None, grid: GridHierarchy | None = None) -> tuple[np.ndarray, np.ndarray, int]:
    """Return ``(eigenvalues, selected coefficient vectors, count)`` for one edge.

    For the pressure-jump pencil the constant-trace field is basis 1 and the
    remaining ``l - 1`` vectors come from the eigenproblem restricted to its
    A-orthogonal complement.
    """
    if pencil.kind != SPECTRAL_2:
        lam, Z = solve_pencil(pencil)
        count = selection_count(lam, l)
        return lam, Z[:, :count], count
    if block is None or grid is None:
        raise ValueError("spectral-2 selection needs the field block and grid")
    J = pencil.A.shape[0]
    if not 1 <= l <= J:
        raise ValueError(f"requested {l} basis functions, edge block has {J}")
    c = constant_trace_vector(grid, block)
    c = c / np.sqrt(c @ pencil.A @ c)
    if J == 1:
        return np.array([np.nan]), c[:, None], 1
    Q = la.null_space((pencil.A @ c)[None, :])
    reduced = LocalPencil(Q.T @ pencil.A @ Q, Q.T @ pencil.S @ Q, SPECTRAL_2)
    lam, Zr = solve_pencil(reduced)
    count = 1 + (selection_count(lam, l - 1) if l > 1 else 0)
    Z = np.column_stack([c, Q @ Zr[:, : count - 1]])
    return np.concatenate([[np.nan], lam]), Z, count


def build_offline(space: SnapshotSpace | list[FieldBlock], system: SaddleSystem, kind: str, l) -> OfflineSpace:
    """Select ``l`` (int, or one per edge block) offline fields on every edge."""
    blocks = space.blocks if isinstance(space, SnapshotSpace) else list(space)
    ls = np.broadcast_to(np.asarray(l), (len(blocks),))
    selections = []
    for blk, li in zip(blocks, ls):
        li = int(min(li, blk.size))
        pencil = build_pencil(kind, blk, system)
        lam, Z, count = select_offline(pencil, li, blk, system.grid)
        selections.append(EdgeSelection(blk, lam, Z, count))
    return OfflineSpace(system.grid, selections, kind)


def edge_spectrum(block: FieldBlock, system: SaddleSystem, kind: str) -> np.ndarray:
    """Ascending eigenvalues of the local pencil (diagnostics)."""
    return solve_pencil(build_pencil(kind, block, system))[0]
