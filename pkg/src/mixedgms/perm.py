"""Cell-wise permeability fields on the fine grid."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

SPE10_NX = 60
SPE10_NY = 220


class PermLoadError(ValueError):
    pass


@dataclass(frozen=True)
class PermField:
    """Positive permeability, one value per fine cell, shape ``(n, n)`` indexed ``[j, i]``."""

    values: np.ndarray
    provenance: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"permeability must be a square 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("permeability must be strictly positive and finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def scaled(self, factor) -> PermField:
        """Multiply cell-wise, e.g. by a mobility field."""
        return PermField(self.values * np.broadcast_to(np.reshape(factor, -1) if np.ndim(factor) else factor, self.values.size).reshape(self.values.shape), self.provenance)


def kappa_per(x1, x2, epsilon: float = 0.1):
    """Periodic high-oscillation coefficient evaluated pointwise."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    w = 2.0 * np.pi / epsilon
    num = 2.0 + 1.8 * np.sin(w * x1)
    gamma = num / (2.0 + 1.8 * np.sin(w * x2)) + num / (2.0 + 1.8 * np.cos(w * x2))
    envelope = (0.4 - np.abs(x1 - 0.5)) * (0.4 - np.abs(x2 - 0.5))
    inside = (x1 >= 0.1) & (x1 <= 0.9) & (x2 >= 0.1) & (x2 <= 0.9)
    return np.where(inside, 1.0 + gamma * envelope, 1.0)


def periodic_field(n: int, epsilon: float = 0.1) -> PermField:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = (np.arange(n) + 0.5) / n
    X1, X2 = np.meshgrid(x, x)
    return PermField(kappa_per(X1, X2, epsilon), "periodic")


def synthetic_field(n: int, seed: int = 0, contrast: float = 1e4) -> PermField:
    """Background 1 with seeded sinuous channels and rectangular inclusions of value ``contrast``.

    At least one channel cell and one background cell always exist, so for
    ``contrast > 1`` the extremes 1 and ``contrast`` are both attained.
    """
    if contrast < 1:
        raise ValueError("contrast must be >= 1")
    values = np.ones((n, n))
    if contrast == 1:
        return PermField(values, "synthetic")
    rng = np.random.default_rng(seed)
    mask = np.zeros((n, n), dtype=bool)
    width = max(1, n // 40)
    s = np.arange(n)
    for _ in range(max(2, n // 8)):
        center = rng.uniform(0.1, 0.9) * n
        amp = rng.uniform(0.02, 0.12) * n
        wavelength = rng.uniform(0.3, 1.2) * n
        phase = rng.uniform(0, 2 * np.pi)
        start, stop = sorted(rng.integers(0, n, size=2))
        if stop - start < n // 3:
            start, stop = 0, n
        path = np.clip(np.round(center + amp * np.sin(2 * np.pi * s / wavelength + phase)), 0, n - width).astype(int)
        horizontal = rng.random() < 0.5
        for k in range(start, stop):
            if horizontal:
                mask[path[k]:path[k] + width, k] = True
            else:
                mask[k, path[k]:path[k] + width] = True
    for _ in range(max(3, n // 4)):
        a, b = rng.integers(1, max(2, n // 12) + 1, size=2)
        i0, j0 = rng.integers(0, n - a + 1), rng.integers(0, n - b + 1)
        mask[j0:j0 + b, i0:i0 + a] = True
    mask[n // 2, n // 2] = True
    mask[0, 0] = False
    values[mask] = contrast
    return PermField(values, "synthetic")


def resample_nearest(values: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resampling of a cell array, axis by axis."""
    ny, nx = values.shape
    ty, tx = shape
    iy = np.minimum(((np.arange(ty) + 0.5) * ny / ty).astype(int), ny - 1)
    ix = np.minimum(((np.arange(tx) + 0.5) * nx / tx).astype(int), nx - 1)
    return values[np.ix_(iy, ix)]


def read_layer(path, layer: int = 0, nx: int = SPE10_NX, ny: int = SPE10_NY) -> np.ndarray:
    """Read one ``ny x nx`` layer (x fastest) from a whitespace-separated text file."""
    path = Path(path)
    if not path.exists():
        raise PermLoadError(f"permeability file not found: {path}")
    if layer < 0:
        raise PermLoadError(f"layer index must be >= 0, got {layer}")
    size = nx * ny
    start = layer * size
    try:
        data = np.loadtxt(path, dtype=float).ravel()
    except ValueError as exc:
        raise PermLoadError(f"could not parse {path}: {exc}") from exc
    if data.size < start + size:
        raise PermLoadError(
            f"short read in {path}: layer {layer} needs values [{start}, {start + size}), file has {data.size}"
        )
    block = data[start:start + size]
    bad = np.flatnonzero(~(block > 0) | ~np.isfinite(block))
    if bad.size:
        raise PermLoadError(f"non-positive permeability {block[bad[0]]} at value offset {start + bad[0]} in {path}")
    return block.reshape(ny, nx)


def load_layer(path, layer: int, target_n: int, nx: int = SPE10_NX, ny: int = SPE10_NY) -> PermField:
    """Load a layer and resample it onto a ``target_n x target_n`` fine grid."""
    raw = read_layer(path, layer, nx, ny)
    return PermField(resample_nearest(raw, (target_n, target_n)), "file")
