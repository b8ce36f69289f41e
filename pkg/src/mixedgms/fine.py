"""Lowest-order Raviart-Thomas mixed discretization on the fine grid.

Flux unknowns are edge-integrated normal fluxes in the direction of the
fixed edge normal, so a pointwise normal velocity ``v.n = 1`` on a fine
edge corresponds to the coefficient ``h``.  Pressure is one value per cell.

Local and global problems are pure Neumann problems.  Each connected
component is factorized with the pressure of one reference cell removed
(its divergence row is implied by compatibility); the pressure is then
shifted to zero mean per component, which is the same solution as imposing
the zero-mean constraint with a multiplier.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .grid import GridHierarchy, Region
from .perm import PermField

RESIDUAL_TOL = 1e-12
COMPAT_TOL = 1e-8


class FineSolverError(RuntimeError):
    pass


class IncompatibleDataError(FineSolverError):
    pass


class SingularSystemError(FineSolverError):
    pass


@dataclass
class SaddleSystem:
    grid: GridHierarchy
    kappa: PermField
    M: sp.csr_matrix
    B: sp.csr_matrix

    @property
    def kinv(self) -> np.ndarray:
        return 1.0 / self.kappa.flat

    def rhs(self, f) -> np.ndarray:
        """Cell-integrated source ``F_h`` for a cell-wise density ``f``."""
        return np.broadcast_to(np.asarray(f, dtype=float), (self.grid.n_cells,)) * self.grid.cell_area

    def energy(self, flux) -> float:
        """``||v||^2`` in the ``kappa^{-1}``-weighted L2 norm."""
        return float(flux @ (self.M @ flux))

    def divergence(self, flux) -> np.ndarray:
        """Cell-integrated divergence (net outflow) of a flux vector."""
        return self.B @ flux


@dataclass
class MixedSolution:
    flux: np.ndarray
    pressure: np.ndarray
    cells: np.ndarray | None = None
    residual: float = 0.0


def rt0_cell_mass(kinv: float = 1.0) -> np.ndarray:
    """Mass matrix of the two parallel RT0 fluxes of a square cell (edge-integrated dofs)."""
    return kinv * np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])


def assemble(grid: GridHierarchy, kappa: PermField, lumped: bool = False) -> SaddleSystem:
    if kappa.n != grid.n:
        raise ValueError(f"permeability is {kappa.n}x{kappa.n} but the fine grid is {grid.n}x{grid.n}")
    kinv = 1.0 / kappa.flat
    ce = grid.cell_edges
    rows, cols, vals = [], [], []
    diag, off = (0.5, 0.0) if lumped else (1.0 / 3.0, 1.0 / 6.0)
    for a, b in ((0, 1), (2, 3)):
        ea, eb = ce[:, a], ce[:, b]
        rows += [ea, eb, ea, eb]
        cols += [ea, eb, eb, ea]
        vals += [diag * kinv, diag * kinv, off * kinv, off * kinv]
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_edges, grid.n_edges),
    )
    cells = np.arange(grid.n_cells)
    B = sp.csr_matrix(
        (
            np.tile([-1.0, 1.0, -1.0, 1.0], grid.n_cells),
            (np.repeat(cells, 4), ce.ravel()),
        ),
        shape=(grid.n_cells, grid.n_edges),
    )
    M.eliminate_zeros()
    return SaddleSystem(grid, kappa, M, B)


class LocalProblem:
    """Factorized mixed Neumann problem on a conforming set of fine cells.

    One factorization serves any number of boundary-flux / source pairs.
    """

    def __init__(self, system: SaddleSystem, cells, region: Region | None = None):
        grid = system.grid
        self.system = system
        self.region = region if region is not None else grid.region(cells)
        reg = self.region
        cells, I, Bd = reg.cells, reg.interior_edges, reg.boundary_edges
        M = system.M[I]
        self.M_II = M[:, I].tocsc()
        self.M_IB = M[:, Bd].tocsc()
        Bc = system.B[cells]
        self.B_I = Bc[:, I].tocsc()
        self.B_B = Bc[:, Bd].tocsc()
        self.n_int, self.n_cells = len(I), len(cells)

        local = np.full(grid.n_cells, -1)
        local[cells] = np.arange(len(cells))
        ec = local[grid.edge_cells[I]]
        adj = sp.coo_matrix((np.ones(len(I)), (ec[:, 0], ec[:, 1])), shape=(len(cells),) * 2)
        self.n_components, self.component = connected_components(adj, directed=False)
        # one reference cell per component; its divergence row is implied by compatibility
        _, first = np.unique(self.component, return_index=True)
        self.free = np.setdiff1d(np.arange(len(cells)), first)
        B_r = self.B_I[self.free]
        self.K = sp.bmat([[self.M_II, -B_r.T], [-B_r, None]], format="csc")
        try:
            self._lu = splu(self.K)
        except RuntimeError as exc:
            raise SingularSystemError(f"factorization of local mixed system failed: {exc}") from exc

    def check_compatibility(self, boundary_flux, F):
        net = np.asarray(F - self.B_B @ boundary_flux)
        scale = np.abs(F) + np.abs(self.B_B @ boundary_flux)
        defect = np.zeros((self.n_components,) + net.shape[1:])
        size = np.zeros_like(defect)
        np.add.at(defect, self.component, net)
        np.add.at(size, self.component, scale)
        bad = np.abs(defect) > COMPAT_TOL * size + 1e-300
        if np.any(bad):
            comp = int(np.argwhere(bad)[0][0])
            raise IncompatibleDataError(
                f"incompatible Neumann data on component {comp}: "
                f"source minus net boundary outflow = {defect[bad].ravel()[0]:.3e}"
            )

    def solve(self, boundary_flux, source, check: bool = True):
        """Solve for interior fluxes and cell pressures.

        ``boundary_flux`` holds edge fluxes on ``region.boundary_edges`` (edge
        orientation), ``source`` a cell-wise density.  Either may be 2-D with
        one column per right-hand side.  Returns ``(flux, pressure)`` where
        ``flux`` is ordered like ``region.edges``.
        """
        ub = np.asarray(boundary_flux, dtype=float)
        F = np.asarray(source, dtype=float) * self.system.grid.cell_area
        multi = ub.ndim == 2 or F.ndim == 2
        nb = len(self.region.boundary_edges)
        ub = ub.reshape(nb, -1) if ub.ndim else np.full((nb, 1), float(ub))
        F = F.reshape(self.n_cells, -1) if F.ndim else np.full((self.n_cells, 1), float(F))
        k = max(ub.shape[1], F.shape[1])
        ub = np.broadcast_to(ub, (nb, k))
        F = np.broadcast_to(F, (self.n_cells, k))
        if check:
            self.check_compatibility(ub, F)
        rhs = np.concatenate([-(self.M_IB @ ub), -(F - self.B_B @ ub)[self.free]])
        x = self._lu.solve(rhs)
        x = x + self._lu.solve(rhs - self.K @ x)
        p = np.zeros((self.n_cells, k))
        p[self.free] = x[self.n_int:]
        area = np.bincount(self.component, minlength=self.n_components)
        for col in range(k):
            mean = np.bincount(self.component, p[:, col], self.n_components) / area
            p[:, col] -= mean[self.component]
        self.last_residual = self._residual(x[: self.n_int], p, ub, F)
        u = np.concatenate([x[: self.n_int], ub])
        if not multi:
            return u[:, 0], p[:, 0]
        return u, p

    def _residual(self, u, p, ub, F) -> float:
        r1 = self.M_II @ u + self.M_IB @ ub - self.B_I.T @ p
        s1 = np.abs(self.M_II) @ np.abs(u) + np.abs(self.M_IB) @ np.abs(ub) + np.abs(self.B_I.T) @ np.abs(p)
        # reference-cell rows carry only the (tolerated) compatibility defect
        r2 = (self.B_I @ u + self.B_B @ ub - F)[self.free]
        s2 = (np.abs(self.B_I) @ np.abs(u) + np.abs(self.B_B) @ np.abs(ub) + np.abs(F))[self.free]
        rel = [np.abs(r).max() / max(sc.max(), 1e-300) for r, sc in ((r1, s1), (r2, s2)) if r.size]
        return float(max(rel, default=0.0))

    def solve_global_vectors(self, boundary_flux, source, check: bool = True) -> MixedSolution:
        """Like :meth:`solve` but scattered into full-grid vectors (single right-hand side)."""
        grid = self.system.grid
        u, p = self.solve(boundary_flux, source, check)
        flux = np.zeros(grid.n_edges)
        flux[self.region.edges] = u
        pressure = np.zeros(grid.n_cells)
        pressure[self.region.cells] = p
        return MixedSolution(flux, pressure, self.region.cells, self.last_residual)


def solve_global(system: SaddleSystem, f, problem: LocalProblem | None = None) -> MixedSolution:
    """Fine solve on the whole domain with zero normal flux on the boundary."""
    grid = system.grid
    F = system.rhs(f)
    total = abs(F.sum())
    if total > 1e-10 * max(np.abs(F).sum(), 1e-300):
        raise IncompatibleDataError(f"source integrates to {F.sum():.3e}; zero-flux boundary needs 0")
    if problem is None:
        problem = LocalProblem(system, np.arange(grid.n_cells))
    nb = len(problem.region.boundary_edges)
    sol = problem.solve_global_vectors(np.zeros(nb), np.broadcast_to(np.asarray(f, float), (grid.n_cells,)), check=False)
    if sol.residual > RESIDUAL_TOL:
        raise SingularSystemError(f"fine solve residual {sol.residual:.2e} exceeds {RESIDUAL_TOL:.0e}")
    return sol


def solve_local_neumann(system: SaddleSystem, cells, boundary_flux, rhs) -> MixedSolution:
    """Mixed Neumann solve on ``cells`` with prescribed boundary fluxes and source density ``rhs``."""
    problem = LocalProblem(system, cells)
    return problem.solve_global_vectors(boundary_flux, np.broadcast_to(np.asarray(rhs, float), (len(problem.region.cells),)))


def corner_source(grid: GridHierarchy) -> np.ndarray:
    """``+1`` on the top-left fine cell, ``-1`` on the bottom-right one."""
    f = np.zeros(grid.n_cells)
    f[grid.cell(0, grid.n - 1)] = 1.0
    f[grid.cell(grid.n - 1, 0)] = -1.0
    return f


def cell_conservation_residual(system: SaddleSystem, flux, f) -> np.ndarray:
    """Per fine cell: net outflow minus integrated source."""
    return system.divergence(flux) - system.rhs(f)
