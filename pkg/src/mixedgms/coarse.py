"""Coarse mixed GMsFEM system, projection into the snapshot space and error metrics."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .fine import RESIDUAL_TOL, IncompatibleDataError, MixedSolution, SaddleSystem
from .grid import GridHierarchy
from .snapshot import BlockSolvers


class DependentBasisError(np.linalg.LinAlgError):
    pass


class UndefinedMetricError(ZeroDivisionError):
    pass


def prolongation(grid: GridHierarchy) -> sp.csr_matrix:
    """``G_H``: coarse-block constants to fine-cell constants."""
    return sp.csr_matrix(
        (np.ones(grid.n_cells), (np.arange(grid.n_cells), grid.cell_block)), shape=(grid.n_cells, grid.n_blocks)
    )


@dataclass
class CoarseSystem:
    Mc: np.ndarray
    Bc: np.ndarray
    Fc: np.ndarray
    G: sp.csr_matrix


def assemble_coarse(R: sp.spmatrix, system: SaddleSystem, f) -> CoarseSystem:
    G = prolongation(system.grid)
    MR = system.M @ R
    Mc = np.asarray((R.T @ MR).todense()) if sp.issparse(MR) else R.T @ MR
    Bc = np.asarray((G.T @ (system.B @ R)).todense())
    Fc = G.T @ system.rhs(f)
    return CoarseSystem(0.5 * (Mc + Mc.T), Bc, Fc, G)


def _check_basis(Mc: np.ndarray, col_edges):
    try:
        la.cholesky(Mc, lower=True)
        return
    except la.LinAlgError:
        pass
    if col_edges is not None:
        for e in np.unique(col_edges):
            idx = np.flatnonzero(col_edges == e)
            try:
                la.cholesky(Mc[np.ix_(idx, idx)], lower=True)
            except la.LinAlgError:
                raise DependentBasisError(f"basis functions of coarse edge {e} are linearly dependent") from None
    raise DependentBasisError("coarse velocity basis is linearly dependent")


@dataclass
class CoarseSolution(MixedSolution):
    coefficients: np.ndarray | None = None
    coarse_pressure: np.ndarray | None = None


def solve_coarse(R: sp.spmatrix, system: SaddleSystem, f, col_edges=None) -> CoarseSolution:
    """Solve the coarse saddle system and return the velocity and pressure on the fine grid.

    The pressure is fixed by a zero-mean constraint with a scalar multiplier.
    """
    grid = system.grid
    F = system.rhs(f)
    if abs(F.sum()) > 1e-10 * max(np.abs(F).sum(), 1e-300):
        raise IncompatibleDataError(f"source integrates to {F.sum():.3e}; zero-flux boundary needs 0")
    cs = assemble_coarse(R, system, f)
    _check_basis(cs.Mc, col_edges)
    m, nb = cs.Mc.shape[0], cs.Bc.shape[0]
    area = np.full(nb, grid.H * grid.H)
    K = np.zeros((m + nb + 1, m + nb + 1))
    K[:m, :m] = cs.Mc
    K[:m, m:m + nb] = -cs.Bc.T
    K[m:m + nb, :m] = -cs.Bc
    K[m:m + nb, -1] = -area
    K[-1, m:m + nb] = -area
    rhs = np.concatenate([np.zeros(m), -cs.Fc, [0.0]])
    x = la.solve(K, rhs, assume_a="sym")
    x = x + la.solve(K, rhs - K @ x, assume_a="sym")
    r = rhs - K @ x
    residual = float(np.abs(r).max() / max((np.abs(K) @ np.abs(x) + np.abs(rhs)).max(), 1e-300))
    if residual > RESIDUAL_TOL:
        raise np.linalg.LinAlgError(f"coarse solve residual {residual:.2e} exceeds {RESIDUAL_TOL:.0e}")
    V, P = x[:m], x[m:m + nb]
    flux = np.asarray(R @ V).ravel()
    return CoarseSolution(flux, cs.G @ P, None, residual, V, P)


def coarse_conservation_check(system: SaddleSystem, flux, f) -> float:
    """``max_K |net outflow through dK - integral of f over K|``."""
    G = prolongation(system.grid)
    return float(np.abs(G.T @ (system.B @ flux - system.rhs(f))).max())


def coarse_inf_sup_sigma(R: sp.spmatrix, system: SaddleSystem) -> np.ndarray:
    """Singular values of the coarse divergence ``B_c`` (one vanishes: constants)."""
    Bc = np.asarray((prolongation(system.grid).T @ (system.B @ R)).todense())
    return la.svdvals(Bc)


def project_fine(system: SaddleSystem, fine: MixedSolution, f, solvers: BlockSolvers | None = None) -> MixedSolution:
    """Per coarse block: local solve with the fine normal fluxes on the block boundary and the block-mean source."""
    grid = system.grid
    solvers = solvers or BlockSolvers(system)
    f = np.broadcast_to(np.asarray(f, dtype=float), (grid.n_cells,))
    flux = fine.flux.copy()
    pressure = np.zeros(grid.n_cells)
    for K in range(grid.n_blocks):
        problem = solvers[K]
        reg = problem.region
        fbar = f[reg.cells].mean()
        u, p = problem.solve(fine.flux[reg.boundary_edges], np.full(len(reg.cells), fbar))
        flux[reg.edges] = u
        pressure[reg.cells] = p + fine.pressure[reg.cells].mean()
    return MixedSolution(flux, pressure)


@dataclass
class ErrorReport:
    E_of_v: float
    E_of_p: float
    E_os_v: float = np.nan
    E_os_p: float = np.nan
    E_pf_v: float = np.nan

    def as_dict(self) -> dict:
        return {fl.name: getattr(self, fl.name) for fl in fields(self)}


def velocity_error(system: SaddleSystem, v, ref) -> float:
    denom = system.energy(ref)
    if denom <= 0:
        raise UndefinedMetricError("reference velocity has zero norm")
    d = v - ref
    return float(np.sqrt(system.energy(d) / denom))


def pressure_error(grid: GridHierarchy, p, ref) -> float:
    denom = float(np.sum(ref ** 2)) * grid.cell_area
    if denom <= 0:
        raise UndefinedMetricError("reference pressure has zero norm")
    return float(np.sqrt(np.sum((p - ref) ** 2) * grid.cell_area / denom))


def error_report(
    system: SaddleSystem,
    fine: MixedSolution,
    offline: MixedSolution,
    snap: MixedSolution | None = None,
    post=None,
) -> ErrorReport:
    grid = system.grid
    rep = ErrorReport(
        velocity_error(system, offline.flux, fine.flux),
        pressure_error(grid, offline.pressure, fine.pressure),
    )
    if snap is not None:
        rep.E_os_v = velocity_error(system, offline.flux, snap.flux)
        rep.E_os_p = pressure_error(grid, offline.pressure, snap.pressure)
    if post is not None:
        rep.E_pf_v = velocity_error(system, post.flux, fine.flux)
    return rep
