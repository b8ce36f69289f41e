"""Experiment pipelines shared by the CLI, scripts and acceptance tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coarse import ErrorReport, error_report, solve_coarse
from .fine import SaddleSystem, assemble, corner_source, solve_global
from .grid import GridHierarchy
from .perm import PermField, load_layer, periodic_field, synthetic_field
from .postprocess import postprocess
from .snapshot import BlockSolvers, SnapshotSpace, build_snapshot_space, column_edges
from .spectral import OfflineSpace, build_offline
from .transport import FluidModel, TransportRun, impes_loop, relative_l2

REFERENCE_FINE_N = 200


def injector_source(grid: GridHierarchy) -> np.ndarray:
    """Saturation source: 1 on the top-left fine cell."""
    r = np.zeros(grid.n_cells)
    r[grid.cell(0, grid.n - 1)] = 1.0
    return r


def block_corner_source(grid: GridHierarchy) -> np.ndarray:
    """+1 on the top-left coarse block, -1 on the bottom-right one (constant per block)."""
    f = np.zeros(grid.n_cells)
    f[grid.block_cells(grid.block(0, grid.N - 1))] = 1.0
    f[grid.block_cells(grid.block(grid.N - 1, 0))] = -1.0
    return f


def make_source(grid: GridHierarchy, kind: str = "corner") -> np.ndarray:
    if kind == "corner":
        return corner_source(grid)
    if kind == "block":
        return block_corner_source(grid)
    raise ValueError(f"unknown source kind {kind!r}")


def make_perm(kind: str, n: int, seed: int = 7, contrast: float = 1e4, epsilon: float = 0.1, path=None, layer: int = 0) -> PermField:
    if kind == "synthetic":
        return synthetic_field(n, seed, contrast)
    if kind == "periodic":
        return periodic_field(n, epsilon)
    if kind == "uniform":
        return PermField(np.ones((n, n)), "uniform")
    if kind == "spe10":
        return load_layer(path, layer, n)
    raise ValueError(f"unknown permeability kind {kind!r}")


def scaled_times(times, n: int, reference_n: int = REFERENCE_FINE_N) -> list[float]:
    """Rescale output times so the injected volume matches a run on a ``reference_n`` grid."""
    return [float(t) * (n / reference_n) ** 2 for t in times]


@dataclass
class DofSweepRow:
    dof: int
    report: ErrorReport
    coarse_residual: float
    Lambda: float


def dof_sweep(
    system: SaddleSystem,
    f,
    kind: str,
    dofs,
    postprocess_velocity: bool = False,
    threads: int = 1,
    snapshots: SnapshotSpace | None = None,
) -> list[DofSweepRow]:
    """Offline errors against fine and snapshot solutions for each dof per edge."""
    from .coarse import coarse_conservation_check

    fine = solve_global(system, f)
    solvers = BlockSolvers(system)
    snapshots = snapshots or build_snapshot_space(system, threads, solvers)
    snap = solve_coarse(snapshots.R, system, f)
    rows = []
    for l in dofs:
        off = build_offline(snapshots, system, kind, l)
        sol = solve_coarse(off.R, system, f, column_edges(off.blocks))
        post = postprocess(system, sol.flux, f, solvers=solvers) if postprocess_velocity else None
        rows.append(DofSweepRow(int(l), error_report(system, fine, sol, snap, post), coarse_conservation_check(system, sol.flux, f), off.Lambda))
    return rows


class MultiscaleVelocity:
    """Coarse velocity from a fixed offline space, re-solved with mobility-scaled permeability."""

    def __init__(self, grid: GridHierarchy, kappa: PermField, offline: OfflineSpace, f, model: FluidModel | None, force_postprocess: bool = False):
        self.grid, self.kappa, self.f, self.model = grid, kappa, f, model
        self.R = offline.R
        self.col_edges = column_edges(offline.blocks)
        self.force_postprocess = force_postprocess

    def __call__(self, S):
        kappa = self.kappa if self.model is None else self.kappa.scaled(self.model.mobility(S))
        system = assemble(self.grid, kappa)
        sol = solve_coarse(self.R, system, self.f, self.col_edges)
        return postprocess(system, sol.flux, self.f, force=self.force_postprocess).flux


class FineVelocity:
    def __init__(self, grid: GridHierarchy, kappa: PermField, f, model: FluidModel | None):
        self.grid, self.kappa, self.f, self.model = grid, kappa, f, model

    def __call__(self, S):
        kappa = self.kappa if self.model is None else self.kappa.scaled(self.model.mobility(S))
        return solve_global(assemble(self.grid, kappa), self.f).flux


@dataclass
class TransportStudy:
    reference: TransportRun
    runs: dict[int, TransportRun]

    def errors(self) -> dict[int, dict[float, float]]:
        return {
            dof: {t: relative_l2(run.snapshots[t], self.reference.snapshots[t]) for t in self.reference.times}
            for dof, run in self.runs.items()
        }


def transport_study(
    grid: GridHierarchy,
    kappa: PermField,
    dofs,
    output_times,
    two_phase: bool = False,
    kind: str = "spectral-1",
    cfl: float = 0.5,
    pressure_cadence: int = 1,
    model: FluidModel = FluidModel(),
    threads: int = 1,
) -> TransportStudy:
    """Saturation from the fine velocity versus offline velocities with ``dofs`` basis functions per edge."""
    f = corner_source(grid)
    r = injector_source(grid)
    sinks = f < 0
    mob = model if two_phase else None
    system = assemble(grid, kappa)
    snapshots = build_snapshot_space(system, threads)
    common = dict(two_phase=two_phase, model=model, cfl=cfl, pressure_cadence=pressure_cadence, sinks=sinks)
    reference = impes_loop(grid, FineVelocity(grid, kappa, f, mob), r, output_times, **common)
    runs = {}
    for l in dofs:
        offline = build_offline(snapshots, system, kind, l)
        runs[int(l)] = impes_loop(grid, MultiscaleVelocity(grid, kappa, offline, f, mob), r, output_times, **common)
    return TransportStudy(reference, runs)
