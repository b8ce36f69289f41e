"""Command-line entry point: ``mixedgms <subcommand> [--config PATH] [--out DIR] [--threads K] [--seed U64]``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .coarse import coarse_conservation_check, velocity_error
from .config import ConfigError, RunConfig, load_config
from .fine import assemble, cell_conservation_residual, solve_global
from .grid import GridError, GridHierarchy
from .oversample import OversamplingStudy
from .perm import PermLoadError
from .postprocess import postprocess
from .snapshot import build_snapshot_space
from .spectral import edge_spectrum
from .transport import FluidModel
from .workflows import dof_sweep, make_perm, make_source, scaled_times, transport_study

log = logging.getLogger("mixedgms")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

SUBCOMMANDS = ("fine", "table", "eigens", "oversample", "transport", "twophase")


class ConservationError(ArithmeticError):
    pass


def _setup(cfg: RunConfig):
    grid = GridHierarchy(cfg.grid.n, cfg.grid.N)
    p = cfg.perm
    kappa = make_perm(p.kind, cfg.grid.n, cfg.perm_seed, p.contrast, p.epsilon, p.path, p.layer)
    return grid, kappa, assemble(grid, kappa), make_source(grid, cfg.source)


def _check_conservation(cfg: RunConfig, system, flux, f, what: str):
    res = coarse_conservation_check(system, flux, f)
    bound = cfg.tolerances.conservation * np.abs(system.rhs(f)).sum()
    if res > bound:
        raise ConservationError(f"{what}: coarse conservation residual {res:.3e} exceeds {bound:.3e}")


def run_fine(cfg: RunConfig, out: Path) -> list[Path]:
    grid, kappa, system, f = _setup(cfg)
    sol = solve_global(system, f)
    cons = cell_conservation_residual(system, sol.flux, f)
    return [
        io.write_csv(out / "flux.csv", ["edge_id", "flux"], zip(range(grid.n_edges), sol.flux)),
        io.write_grid_csv(out / "pressure.csv", sol.pressure, grid.n),
        io.write_grid_csv(out / "permeability.csv", kappa.flat, grid.n),
        io.write_csv(
            out / "summary.csv",
            ["n", "N", "residual", "max_cell_conservation", "energy"],
            [[grid.n, grid.N, sol.residual, float(np.abs(cons).max()), system.energy(sol.flux)]],
        ),
    ]


def run_table(cfg: RunConfig, out: Path) -> list[Path]:
    grid, _, system, f = _setup(cfg)
    sc = cfg.spectral
    snapshots = build_snapshot_space(system, cfg.workers)
    dofs = list(sc.dofs)
    full = max(b.size for b in snapshots.blocks)
    if sc.full and full not in dofs:
        dofs.append(full)
    rows = dof_sweep(system, f, sc.kind, dofs, sc.postprocess, cfg.workers, snapshots)
    header = ["dof_per_E", "E_of_v", "E_of_p", "E_os_v", "E_os_p"] + (["E_pf_v"] if sc.postprocess else [])
    table = []
    for row in rows:
        if row.coarse_residual > cfg.tolerances.conservation * np.abs(system.rhs(f)).sum():
            raise ConservationError(f"dof {row.dof}: coarse conservation residual {row.coarse_residual:.3e}")
        r = row.report
        table.append([row.dof, r.E_of_v, r.E_of_p, r.E_os_v, r.E_os_p] + ([r.E_pf_v] if sc.postprocess else []))
    return [io.write_csv(out / "table.csv", header, table)]


def run_eigens(cfg: RunConfig, out: Path) -> list[Path]:
    grid, _, system, _ = _setup(cfg)
    snapshots = build_snapshot_space(system, cfg.workers)
    rows = []
    for blk in snapshots.blocks:
        lam = edge_spectrum(blk, system, cfg.spectral.kind)
        for k, v in enumerate(lam, start=1):
            inv = 0.0 if np.isinf(v) else (np.inf if v == 0 else 1.0 / v)
            rows.append([blk.edge.id, k, v, inv])
    return [io.write_csv(out / "eigenvalues.csv", ["edge_id", "k", "lambda", "inv_lambda"], rows)]


def run_oversample(cfg: RunConfig, out: Path) -> list[Path]:
    grid, _, system, f = _setup(cfg)
    o = cfg.oversample
    study = OversamplingStudy(system, f, o.layers, o.reduced_width, o.include_domain_boundary, cfg.workers)
    sv_rows = [[p.edge.id, k, s] for p in study.pods for k, s in enumerate(p.sigma, start=1)]
    rows = []
    for l in o.dofs:
        row = [l]
        for case in o.cases:
            sol = study.solve_case(case, l)
            _check_conservation(cfg, system, sol.flux, f, f"case {case}, dof {l}")
            flux = postprocess(system, sol.flux, f, solvers=study.solvers).flux if o.postprocess else sol.flux
            row.append(velocity_error(system, flux, study.fine.flux))
        rows.append(row)
    return [
        io.write_csv(out / "singular_values.csv", ["edge_id", "k", "sigma"], sv_rows),
        io.write_csv(out / "cases.csv", ["dof_per_E"] + [f"case{c}" for c in o.cases], rows),
    ]


def _run_transport(cfg: RunConfig, out: Path, two_phase: bool) -> list[Path]:
    grid, kappa, _, _ = _setup(cfg)
    t = cfg.transport
    times = scaled_times(t.output_times, grid.n) if t.scale_times else list(t.output_times)
    study = transport_study(
        grid, kappa, t.dofs, times, two_phase, cfg.spectral.kind, t.cfl, t.pressure_cadence,
        FluidModel(t.mu_w, t.mu_o), cfg.workers,
    )
    files = []
    runs = {"fine": study.reference} | {f"dof{l}": run for l, run in study.runs.items()}
    for label, run in runs.items():
        for idx, time in enumerate(run.times):
            files.append(io.write_grid_csv(out / f"saturation_{label}_t{idx}.csv", run.snapshots[time], grid.n))
    errors = study.errors()
    rows = []
    for l, run in study.runs.items():
        for idx, time in enumerate(run.times):
            rows.append([l, idx, time, errors[l][time], run.steps, max(run.balance_defects, default=0.0)])
    files.append(io.write_csv(out / "summary.csv", ["dof_per_E", "time_index", "time", "rel_l2_error", "steps", "max_balance_defect"], rows))
    return files


def run_transport(cfg: RunConfig, out: Path) -> list[Path]:
    return _run_transport(cfg, out, two_phase=False)


def run_twophase(cfg: RunConfig, out: Path) -> list[Path]:
    return _run_transport(cfg, out, two_phase=True)


RUNNERS = {
    "fine": run_fine,
    "table": run_table,
    "eigens": run_eigens,
    "oversample": run_oversample,
    "transport": run_transport,
    "twophase": run_twophase,
}


def run(subcommand: str, cfg: RunConfig) -> list[Path]:
    """Run one experiment; outputs and ``manifest.json`` land in ``cfg.out``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = RUNNERS[subcommand](cfg, out)
    io.write_manifest(out, cfg.to_dict(), files, subcommand)
    return files


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixedgms", description="Mixed GMsFEM experiments on the unit square.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, help="YAML run configuration")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--threads", type=int, help="worker pool size for per-edge work")
    parser.add_argument("--seed", type=int, help="permeability seed (overrides perm.seed)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        overrides = {k: v for k, v in (("out", args.out), ("threads", args.threads), ("seed", args.seed)) if v is not None}
        if overrides:
            cfg = RunConfig.from_dict(dataclasses.asdict(cfg) | overrides)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        files = run(args.subcommand, cfg)
    except (ConfigError, GridError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PermLoadError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (np.linalg.LinAlgError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"numerical error in {type(exc).__module__}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    log.info("wrote %d files to %s", len(files) + 1, cfg.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
