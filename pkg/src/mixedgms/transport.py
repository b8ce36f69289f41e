"""Explicit upwind finite-volume saturation transport driven by fine-edge fluxes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridHierarchy


class StepSizeError(RuntimeError):
    pass


@dataclass(frozen=True)
class FluidModel:
    mu_w: float = 1.0
    mu_o: float = 5.0

    def krw(self, S):
        return np.asarray(S, dtype=float) ** 2

    def kro(self, S):
        return (1.0 - np.asarray(S, dtype=float)) ** 2

    def mobility(self, S):
        """Total mobility ``eta(S)``."""
        return self.krw(S) / self.mu_w + self.kro(S) / self.mu_o

    def frac_flow(self, S):
        """Water fractional flow ``F(S)``."""
        return (self.krw(S) / self.mu_w) / self.mobility(S)

    def max_frac_flow_slope(self, samples: int = 10001) -> float:
        S = np.linspace(0.0, 1.0, samples)
        return float(np.max(np.abs(np.gradient(self.frac_flow(S), S))))


def cell_outflow(grid: GridHierarchy, flux) -> np.ndarray:
    """Sum of outgoing edge fluxes per cell."""
    flux = np.asarray(flux, dtype=float)
    minus, plus = grid.edge_cells[:, 0], grid.edge_cells[:, 1]
    out = np.zeros(grid.n_cells + 1)  # last slot collects the outside
    np.add.at(out, minus, np.maximum(flux, 0.0))
    np.add.at(out, plus, np.maximum(-flux, 0.0))
    return out[:-1]


def cfl_dt(grid: GridHierarchy, flux, cfl: float = 0.5, speed: float = 1.0) -> float:
    """``cfl * min_cells |tau| / (speed * outflow)``; ``inf`` when nothing flows."""
    if not 0 < cfl <= 1:
        raise ValueError(f"cfl must lie in (0, 1], got {cfl}")
    out = cell_outflow(grid, flux) * speed
    if not np.any(out > 0):
        return np.inf
    return float(cfl * grid.cell_area / out.max())


def upwind_outflow(grid: GridHierarchy, flux, face_values) -> np.ndarray:
    """``integral over dtau of S_hat (v.n)`` per cell with upstream face values."""
    flux = np.asarray(flux, dtype=float)
    minus, plus = grid.edge_cells[:, 0], grid.edge_cells[:, 1]
    vals = np.append(np.asarray(face_values, dtype=float), 0.0)
    upstream = np.where(flux > 0, vals[minus], vals[plus])
    carried = flux * upstream
    net = np.zeros(grid.n_cells + 1)
    np.add.at(net, minus, carried)
    np.add.at(net, plus, -carried)
    return net[:-1]


def _check(S, lo, hi, skip=None):
    bad = (S < lo - 1e-12) | (S > hi + 1e-12)
    if skip is not None:
        bad &= ~skip
    if np.any(bad):
        c = int(np.flatnonzero(bad)[0])
        raise StepSizeError(f"saturation {S[c]:.6g} left [{lo}, {hi}] in cell {c}; time step too large")


def step_single_phase(grid: GridHierarchy, S, flux, r, dt: float, check: bool = True) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    new = S + dt * (np.broadcast_to(r, S.shape) - upwind_outflow(grid, flux, S) / grid.cell_area)
    if check:
        _check(new, 0.0, np.inf)
    return new


def step_two_phase(grid: GridHierarchy, S, flux, r, dt: float, model: FluidModel = FluidModel(), check: bool = True, sinks=None) -> np.ndarray:
    """Upwind step with fractional flow on the faces.

    ``sinks`` marks cells excluded from the upper-bound check: the scheme
    has no withdrawal term, so water arriving at a producer accumulates.
    """
    S = np.asarray(S, dtype=float)
    new = S + dt * (np.broadcast_to(r, S.shape) - upwind_outflow(grid, flux, model.frac_flow(S)) / grid.cell_area)
    if check:
        _check(new, 0.0, 1.0, sinks)
    return new


@dataclass
class TransportRun:
    times: list[float]
    snapshots: dict[float, np.ndarray]
    steps: int = 0
    balance_defects: list[float] = field(default_factory=list)


def relative_l2(S, ref) -> float:
    denom = np.linalg.norm(ref)
    if denom == 0:
        raise ZeroDivisionError("reference saturation vanishes")
    return float(np.linalg.norm(S - ref) / denom)


def impes_loop(
    grid: GridHierarchy,
    velocity,
    r,
    output_times,
    two_phase: bool = False,
    model: FluidModel = FluidModel(),
    cfl: float = 0.5,
    pressure_cadence: int = 1,
    S0=None,
    sinks=None,
    max_steps: int = 10_000_000,
) -> TransportRun:
    """March saturation to each output time.

    ``velocity(S)`` returns fine-edge fluxes for the current saturation; it is
    called once for single-phase runs and every ``pressure_cadence`` steps
    for two-phase runs.  Per-step global balance defects
    ``|sum |tau| dS - dt sum r |tau|| / (dt sum r |tau|)`` are recorded.
    """
    S = np.zeros(grid.n_cells) if S0 is None else np.array(S0, dtype=float)
    r = np.broadcast_to(np.asarray(r, dtype=float), (grid.n_cells,))
    times = sorted(float(t) for t in output_times)
    speed = model.max_frac_flow_slope() if two_phase else 1.0
    run = TransportRun(times, {})
    t, step = 0.0, 0
    flux = velocity(S)
    injected = float(r.sum() * grid.cell_area)
    for target in times:
        while t < target * (1 - 1e-14):
            if two_phase and step and step % pressure_cadence == 0:
                flux = velocity(S)
            dt = min(cfl_dt(grid, flux, cfl, speed), target - t)
            if not np.isfinite(dt):
                raise StepSizeError("no finite time step: velocity and remaining time are both unbounded")
            if two_phase:
                new = step_two_phase(grid, S, flux, r, dt, model, sinks=sinks)
            else:
                new = step_single_phase(grid, S, flux, r, dt)
            gained = float((new - S).sum() * grid.cell_area)
            expected = dt * injected
            run.balance_defects.append(abs(gained - expected) / max(abs(expected), 1e-300))
            S, t, step = new, t + dt, step + 1
            if step > max_steps:
                raise StepSizeError(f"exceeded {max_steps} transport steps")
        run.snapshots[target] = S.copy()
    run.steps = step
    return run
