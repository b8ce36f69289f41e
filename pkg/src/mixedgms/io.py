"""CSV writers and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    """6 significant digits, scientific notation below 1e-3."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x != 0 and abs(x) < 1e-3:
        return f"{x:.5e}"
    return f"{x:.6g}"


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return path


def write_grid_csv(path, values: np.ndarray, n: int):
    """Cell field as ``n`` rows of ``n`` values; row 0 is the bottom row (``j = 0``)."""
    grid = np.asarray(values).reshape(n, n)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in grid:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def write_manifest(out_dir, config: dict, files, subcommand: str | None = None) -> Path:
    out_dir = Path(out_dir)
    manifest = {
        "config": config,
        "config_hash": config_hash(config),
        "subcommand": subcommand,
        "files": {str(Path(f).relative_to(out_dir)): sha256(f) for f in sorted(files)},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
