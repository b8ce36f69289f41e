"""Oversampled snapshot spaces: harmonic extensions on enlarged regions, POD of edge traces."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .coarse import ErrorReport, error_report, solve_coarse
from .fine import LocalProblem, MixedSolution, SaddleSystem, solve_global
from .grid import CoarseEdge
from .snapshot import BlockSolvers, FieldBlock, build_snapshot_space, column_edges, edge_fields, assemble_R
from .spectral import SPECTRAL_1, SPECTRAL_2, build_offline

CASES = (1, 2, 3, 4)


class RankError(ValueError):
    pass


def harmonic_extension(system: SaddleSystem, cells, psi, problem: LocalProblem | None = None) -> MixedSolution:
    """``kappa``-harmonic extension of outward normal data ``psi`` given on the region's boundary edges.

    The divergence is the constant ``|Omega|^{-1} * integral of psi``, so the
    Neumann problem is always compatible.
    """
    grid = system.grid
    problem = problem or LocalProblem(system, cells)
    reg = problem.region
    psi = np.asarray(psi, dtype=float)
    outward = grid.h * psi
    c = outward.sum() / (len(reg.cells) * grid.cell_area)
    sol = problem.solve_global_vectors(reg.boundary_sign * outward, np.full(len(reg.cells), c))
    sol.divergence_constant = c
    return sol


@dataclass
class TraceEnsemble:
    """Columns: normal traces on the coarse edge of harmonic extensions of boundary indicators."""

    edge: CoarseEdge
    values: np.ndarray
    weights: np.ndarray
    sources: np.ndarray  # boundary fine edges of the oversampled region, one per column
    cells: np.ndarray


def ensemble_sources(system: SaddleSystem, problem: LocalProblem, include_domain_boundary: bool) -> np.ndarray:
    """Positions (into the region's boundary edge list) that get an indicator."""
    bd = problem.region.boundary_edges
    if include_domain_boundary:
        return np.arange(len(bd))
    on_domain = (system.grid.edge_cells[bd] < 0).any(axis=1)
    return np.flatnonzero(~on_domain)


def build_trace_ensemble(
    system: SaddleSystem,
    edge: CoarseEdge,
    layers: int | None = None,
    include_domain_boundary: bool = False,
) -> TraceEnsemble:
    """One harmonic extension per boundary fine edge of ``omega_i^+``, all from one factorization."""
    grid = system.grid
    cells = grid.oversampled_neighborhood(edge, layers)
    problem = LocalProblem(system, cells)
    reg = problem.region
    cols = ensemble_sources(system, problem, include_domain_boundary)
    nb, P = len(reg.boundary_edges), len(cols)
    ub = np.zeros((nb, P))
    ub[cols, np.arange(P)] = reg.boundary_sign[cols] * grid.h
    c = grid.h / (len(reg.cells) * grid.cell_area)
    u, _ = problem.solve(ub, np.full((len(reg.cells), P), c))
    edges = reg.edges
    order = np.argsort(edges)
    pos = order[np.searchsorted(edges, edge.fine_edges, sorter=order)]
    traces = u[pos] / grid.h
    return TraceEnsemble(edge, traces, np.full(edge.n_fine, grid.h), reg.boundary_edges[cols], reg.cells)


@dataclass
class PodModes:
    edge: CoarseEdge
    modes: np.ndarray  # pointwise traces, columns orthonormal in the weighted L2(E) product
    sigma: np.ndarray
    rank: int

    def tail_energy(self, l: int) -> float:
        s2 = self.sigma ** 2
        total = s2.sum()
        return float(1.0 - s2[:l].sum() / total) if total > 0 else 0.0


def numerical_rank(sigma: np.ndarray, shape) -> int:
    if sigma.size == 0 or sigma[0] == 0:
        return 0
    return int(np.sum(sigma > sigma[0] * max(shape) * np.finfo(float).eps))


def pod(ensemble: TraceEnsemble, l: int | None = None) -> PodModes:
    """Weighted SVD of the trace ensemble; keep the first ``l`` left singular vectors (all by default)."""
    w = np.sqrt(ensemble.weights)
    U, sigma, _ = np.linalg.svd(w[:, None] * ensemble.values, full_matrices=False)
    rank = numerical_rank(sigma, ensemble.values.shape)
    if l is None:
        l = rank
    if not 1 <= l <= rank:
        raise RankError(f"requested {l} POD modes but the ensemble of edge {ensemble.edge.id} has numerical rank {rank}")
    return PodModes(ensemble.edge, U[:, :l] / w[:, None], sigma, rank)


def synthesize_basis(solvers: BlockSolvers, edge: CoarseEdge, modes) -> FieldBlock:
    """Fields in ``omega_i`` whose normal traces on the edge are the given modes."""
    return edge_fields(solvers, edge, modes)


class OversamplingStudy:
    """Shared state for comparing oversampled and non-oversampled offline spaces on one problem."""

    def __init__(
        self,
        system: SaddleSystem,
        f,
        layers: int | None = None,
        reduced_width: int = 3,
        include_domain_boundary: bool = False,
        threads: int = 1,
    ):
        self.system = system
        self.f = f
        self.layers = layers
        self.reduced_width = reduced_width
        self.include_domain_boundary = include_domain_boundary
        self.threads = threads
        self.solvers = BlockSolvers(system)
        self.fine = solve_global(system, f)
        self.snapshots = build_snapshot_space(system, threads, self.solvers)
        self.snap_solution = solve_coarse(self.snapshots.R, system, f)
        self._pods: list[PodModes] | None = None

    @property
    def edges(self) -> list[CoarseEdge]:
        return self.system.grid.interior_coarse_edges

    @property
    def pods(self) -> list[PodModes]:
        if self._pods is None:
            def one(edge):
                ens = build_trace_ensemble(self.system, edge, self.layers, self.include_domain_boundary)
                return pod(ens)

            if self.threads > 1:
                with ThreadPoolExecutor(self.threads) as pool:
                    self._pods = list(pool.map(one, self.edges))
            else:
                self._pods = [one(e) for e in self.edges]
        return self._pods

    def ovs_blocks(self, l: int) -> list[FieldBlock]:
        return [synthesize_basis(self.solvers, p.edge, p.modes[:, : min(l, p.rank)]) for p in self.pods]

    def offline_blocks(self, case: int, l: int) -> list[FieldBlock]:
        if case == 1:
            return self.ovs_blocks(l)
        if case == 2:
            reduced = self.ovs_blocks(self.reduced_width)
            return build_offline(reduced, self.system, SPECTRAL_1, l).blocks
        if case == 3:
            return build_offline(self.snapshots, self.system, SPECTRAL_1, l).blocks
        if case == 4:
            return build_offline(self.snapshots, self.system, SPECTRAL_2, l).blocks
        raise ValueError(f"case must be one of {CASES}, got {case}")

    def solve_case(self, case: int, l: int):
        blocks = self.offline_blocks(case, l)
        return solve_coarse(assemble_R(self.system.grid, blocks), self.system, self.f, column_edges(blocks))

    def run_case(self, case: int, l: int) -> ErrorReport:
        return error_report(self.system, self.fine, self.solve_case(case, l), self.snap_solution)
