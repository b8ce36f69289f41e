"""Run configuration: nested dataclasses loaded from a YAML document."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import yaml

from .spectral import KINDS

PERM_KINDS = ("synthetic", "periodic", "spe10", "uniform")
SOURCES = ("corner", "block")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass
class GridConfig:
    n: int = 40
    N: int = 4


@dataclass
class PermConfig:
    kind: str = "synthetic"
    seed: int = 7
    contrast: float = 1e4
    epsilon: float = 0.1
    path: str | None = None
    layer: int = 0


@dataclass
class SpectralConfig:
    kind: str = "spectral-1"
    dofs: list[int] = field(default_factory=lambda: [1, 3, 5, 7, 9])
    full: bool = True  # append a row with every snapshot kept
    postprocess: bool = False


@dataclass
class OversampleConfig:
    layers: int | None = None
    reduced_width: int = 3
    dofs: list[int] = field(default_factory=lambda: [1, 2, 3])
    cases: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    include_domain_boundary: bool = False
    postprocess: bool = True


@dataclass
class TransportConfig:
    dofs: list[int] = field(default_factory=lambda: [1, 3, 5])
    cfl: float = 0.5
    output_times: list[float] = field(default_factory=lambda: [1000.0, 3000.0, 5000.0])
    scale_times: bool = True
    pressure_cadence: int = 1
    mu_w: float = 1.0
    mu_o: float = 5.0


@dataclass
class Tolerances:
    conservation: float = 1e-10


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    perm: PermConfig = field(default_factory=PermConfig)
    source: str = "corner"
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    oversample: OversampleConfig = field(default_factory=OversampleConfig)
    transport: TransportConfig = field(default_factory=TransportConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    out: str = "out"
    threads: int | None = None
    seed: int | None = None

    @property
    def workers(self) -> int:
        return self.threads or os.cpu_count() or 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> RunConfig:
        problems: list[str] = []
        cfg = _build(cls, data or {}, "", problems)
        try:
            problems.extend(cfg.validate())
        except TypeError:
            pass  # a field of the wrong type is already reported
        if problems:
            raise ConfigError(problems)
        return cfg

    def validate(self) -> list[str]:
        p = []
        g = self.grid
        if g.n < 2:
            p.append(f"grid.n = {g.n}: must be >= 2")
        if g.N < 2:
            p.append(f"grid.N = {g.N}: must be >= 2")
        if g.n >= 2 and g.N >= 2:
            if g.n % g.N:
                p.append(f"grid.n = {g.n} is not divisible by grid.N = {g.N}")
            elif g.n // g.N < 2:
                p.append(f"grid.n / grid.N = {g.n // g.N}: each coarse block needs at least 2 fine cells per side")
        pm = self.perm
        if pm.kind not in PERM_KINDS:
            p.append(f"perm.kind = {pm.kind!r}: must be one of {PERM_KINDS}")
        if pm.contrast < 1:
            p.append(f"perm.contrast = {pm.contrast}: must be >= 1")
        if pm.epsilon <= 0:
            p.append(f"perm.epsilon = {pm.epsilon}: must be > 0")
        if pm.seed < 0:
            p.append(f"perm.seed = {pm.seed}: must be >= 0")
        if pm.kind == "spe10" and not pm.path:
            p.append("perm.path: required when perm.kind = 'spe10'")
        if pm.layer < 0:
            p.append(f"perm.layer = {pm.layer}: must be >= 0")
        if self.source not in SOURCES:
            p.append(f"source = {self.source!r}: must be one of {SOURCES}")
        if self.spectral.kind not in KINDS:
            p.append(f"spectral.kind = {self.spectral.kind!r}: must be one of {KINDS}")
        for name, dofs in (("spectral.dofs", self.spectral.dofs), ("oversample.dofs", self.oversample.dofs), ("transport.dofs", self.transport.dofs)):
            if not dofs or any(d < 1 for d in dofs):
                p.append(f"{name} = {dofs}: must be a nonempty list of positive integers")
        o = self.oversample
        if o.layers is not None and o.layers < 1:
            p.append(f"oversample.layers = {o.layers}: must be >= 1")
        if o.reduced_width < 1:
            p.append(f"oversample.reduced_width = {o.reduced_width}: must be >= 1")
        if not o.cases or any(c not in (1, 2, 3, 4) for c in o.cases):
            p.append(f"oversample.cases = {o.cases}: entries must be in 1..4")
        t = self.transport
        if not 0 < t.cfl <= 1:
            p.append(f"transport.cfl = {t.cfl}: must lie in (0, 1]")
        if not t.output_times or any(x <= 0 for x in t.output_times):
            p.append(f"transport.output_times = {t.output_times}: must be a nonempty list of positive times")
        if t.pressure_cadence < 1:
            p.append(f"transport.pressure_cadence = {t.pressure_cadence}: must be >= 1")
        if t.mu_w <= 0 or t.mu_o <= 0:
            p.append(f"transport viscosities ({t.mu_w}, {t.mu_o}): must be > 0")
        if self.tolerances.conservation <= 0:
            p.append(f"tolerances.conservation = {self.tolerances.conservation}: must be > 0")
        if self.threads is not None and self.threads < 1:
            p.append(f"threads = {self.threads}: must be >= 1")
        if self.seed is not None and not 0 <= self.seed < 2 ** 64:
            p.append(f"seed = {self.seed}: must be an unsigned 64-bit integer")
        return p

    @property
    def perm_seed(self) -> int:
        """Top-level ``seed`` overrides ``perm.seed``."""
        return self.perm.seed if self.seed is None else self.seed


def _check_type(value, annotation: str, where: str, problems: list[str]):
    optional = "None" in annotation
    if value is None:
        if not optional:
            problems.append(f"{where}: must not be null")
        return value
    base = annotation.replace(" | None", "")
    if base == "bool":
        ok = isinstance(value, bool)
    elif base == "int":
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif base == "float":
        if isinstance(value, str):  # YAML 1.1 reads "1e4" as a string
            try:
                value = float(value)
            except ValueError:
                pass
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif base == "str":
        ok = isinstance(value, str)
    elif base.startswith("list["):
        inner = base[5:-1]
        ok = isinstance(value, list)
        if ok:
            sub: list[str] = []
            value = [_check_type(v, inner, f"{where}[{i}]", sub) for i, v in enumerate(value)]
            problems.extend(sub)
            return value
    else:
        ok = True
    if not ok:
        problems.append(f"{where} = {value!r}: expected {base}")
    return value


def _build(cls, data, prefix: str, problems: list[str]):
    if not isinstance(data, dict):
        problems.append(f"{prefix or 'config'}: expected a mapping, got {type(data).__name__}")
        return cls()
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            problems.append(f"{prefix}{key}: unknown field")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        where = f"{prefix}{name}"
        default = f.default_factory() if callable(f.default_factory) else f.default
        if is_dataclass(default):
            kwargs[name] = _build(type(default), data[name], where + ".", problems)
        else:
            kwargs[name] = _check_type(data[name], str(f.type), where, problems)
    return cls(**kwargs)


def load_config(path) -> RunConfig:
    """Read a YAML config; a missing file raises ``OSError``."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from exc
    return RunConfig.from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
