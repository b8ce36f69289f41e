"""Fine-scale conservative velocity recovered from a coarse solution block by block."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fine import IncompatibleDataError, SaddleSystem
from .snapshot import BlockSolvers


@dataclass
class PostprocessedVelocity:
    flux: np.ndarray
    source: np.ndarray
    processed_blocks: list[int]


def blocks_with_varying_source(system: SaddleSystem, f) -> list[int]:
    grid = system.grid
    f = np.broadcast_to(np.asarray(f, dtype=float), (grid.n_cells,))
    lo = np.full(grid.n_blocks, np.inf)
    hi = np.full(grid.n_blocks, -np.inf)
    np.minimum.at(lo, grid.cell_block, f)
    np.maximum.at(hi, grid.cell_block, f)
    return [int(K) for K in np.flatnonzero(hi > lo)]


def postprocess(
    system: SaddleSystem,
    coarse_flux,
    f,
    force: bool = False,
    solvers: BlockSolvers | None = None,
) -> PostprocessedVelocity:
    """Replace the velocity inside coarse blocks by local fine solves.

    Each block keeps the coarse normal fluxes on its boundary and gets the
    fine source ``f``.  Only blocks where ``f`` varies are processed unless
    ``force`` is set.
    """
    grid = system.grid
    solvers = solvers or BlockSolvers(system)
    f = np.broadcast_to(np.asarray(f, dtype=float), (grid.n_cells,))
    flux = np.array(coarse_flux, dtype=float)
    blocks = list(range(grid.n_blocks)) if force else blocks_with_varying_source(system, f)
    for K in blocks:
        problem = solvers[K]
        reg = problem.region
        try:
            u, _ = problem.solve(flux[reg.boundary_edges], f[reg.cells])
        except IncompatibleDataError as exc:
            outflow = float(reg.boundary_sign @ flux[reg.boundary_edges])
            defect = outflow - float(f[reg.cells].sum() * grid.cell_area)
            raise IncompatibleDataError(f"coarse block {K} is not conservative (defect {defect:.3e})") from exc
        flux[reg.interior_edges] = u[: len(reg.interior_edges)]
    return PostprocessedVelocity(flux, f, blocks)
