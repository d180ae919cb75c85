"""INI run configuration.

Every key has a default; a file only lists what it changes.  Keys may sit
under their section header or, if unambiguous, before any header.  Unknown
keys and out-of-range values raise :class:`ConfigurationError` naming the key.

Example::

    [operator]
    s = 0.75
    [grid]
    L = 64
    N = 2048
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigurationError
from .fracop import DRIFT_SCHEMES, OperatorSpec
from .kpp import PATCH_SHAPES

OUTPUT_ENV = "FRACPATCH_OUTPUT_DIR"

_NORMALIZATION_ALIASES = {"unit": "unit", "paper": "paper", "paperconstant": "paper"}


@dataclass(frozen=True)
class GridSection:
    L: float = 64.0
    N: int = 2048


@dataclass(frozen=True)
class OperatorSection:
    s: float = 0.75
    c: float = 0.0
    normalization: str = "unit"
    drift_scheme: str = "central"
    peclet_threshold: float = 1.0


@dataclass(frozen=True)
class ModelSection:
    kind: str = "model"
    a0: float = 2.0
    patch_width: float = 2.0
    patch_shape: str = "box-smoothed"
    nu: float = 1.0
    p: float = 1.0
    M: float = 0.0  # 0 means: use S
    S: float = 0.0  # 0 means: 1.5 * max(a)^(1/p)


@dataclass(frozen=True)
class SimSection:
    dt: float = 0.05
    T_max: float = 300.0
    steady_tol: float = 1e-8
    extinction_tol: float = 1e-6
    snapshot_stride: int = 200


@dataclass(frozen=True)
class EigenSection:
    R_schedule: tuple = ()
    tol: float = 1e-9
    line_tol: float = 1e-6
    max_iter: int = 10_000


@dataclass(frozen=True)
class ThresholdSection:
    c_max: float = 10.0
    n_scan: int = 21
    bisect_tol: float = 1e-2


@dataclass(frozen=True)
class TailSection:
    window_lo_factor: float = 4.0
    window_hi_factor: float = 0.5


@dataclass(frozen=True)
class OutputSection:
    directory: str = "fracpatch_out"
    precision: int = 17


SECTIONS = {
    "grid": GridSection,
    "operator": OperatorSection,
    "model": ModelSection,
    "sim": SimSection,
    "eigen": EigenSection,
    "thresholds": ThresholdSection,
    "tail": TailSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    operator: OperatorSection = field(default_factory=OperatorSection)
    model: ModelSection = field(default_factory=ModelSection)
    sim: SimSection = field(default_factory=SimSection)
    eigen: EigenSection = field(default_factory=EigenSection)
    thresholds: ThresholdSection = field(default_factory=ThresholdSection)
    tail: TailSection = field(default_factory=TailSection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def operator_spec(self) -> OperatorSpec:
        o = self.operator
        return OperatorSpec(o.s, o.c, o.normalization, o.drift_scheme, o.peclet_threshold)

    @property
    def output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output.directory)

    def to_ini(self) -> str:
        lines = []
        for name in SECTIONS:
            sec = getattr(self, name)
            lines.append(f"[{name}]")
            for f in fields(sec):
                v = getattr(sec, f.name)
                if isinstance(v, tuple):
                    v = ", ".join(repr(float(t)) for t in v)
                elif isinstance(v, float):
                    v = repr(v)
                lines.append(f"{f.name} = {v}")
            lines.append("")
        return "\n".join(lines)


def _convert(section: str, key: str, raw: str, default):
    where = f"{section}.{key}"
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if isinstance(default, float):
            v = float(raw)
            if math.isnan(v):
                raise ValueError
            return v
        if isinstance(default, tuple):
            return tuple(float(t) for t in raw.replace(";", ",").split(",") if t.strip())
    except ValueError:
        raise ConfigurationError(f"{where}: cannot read {raw!r} as {type(default).__name__}") from None
    return raw


def _validate(cfg: RunConfig) -> RunConfig:
    def need(cond, key, msg):
        if not cond:
            raise ConfigurationError(f"{key}: {msg}")

    g, o, m, sim, e, t, tail, out = (cfg.grid, cfg.operator, cfg.model, cfg.sim, cfg.eigen,
                                     cfg.thresholds, cfg.tail, cfg.output)
    need(g.L > 0 and math.isfinite(g.L), "grid.L", "L must be > 0")
    need(g.N >= 3, "grid.N", "N must be >= 3")
    need(0.5 < o.s < 1, "operator.s", "s must lie in (0.5, 1)")
    need(math.isfinite(o.c), "operator.c", "c must be finite")
    norm = _NORMALIZATION_ALIASES.get(o.normalization.lower())
    need(norm is not None, "operator.normalization", "expected unit or paper")
    need(o.drift_scheme.lower() in DRIFT_SCHEMES, "operator.drift_scheme",
         f"expected one of {DRIFT_SCHEMES}")
    need(o.peclet_threshold > 0, "operator.peclet_threshold", "must be > 0")
    need(m.kind == "model", "model.kind", "only 'model' (u (a(x) - u^p)) is configurable")
    need(m.patch_shape in PATCH_SHAPES, "model.patch_shape", f"expected one of {PATCH_SHAPES}")
    need(m.patch_width > 0, "model.patch_width", "must be > 0")
    need(m.nu > 0, "model.nu", "nu must be > 0")
    need(m.p >= 1, "model.p", "p ≥ 1")
    need(m.M >= 0 and m.S >= 0, "model.M/model.S", "must be >= 0")
    need(sim.dt > 0, "sim.dt", "dt must be > 0")
    need(sim.T_max > 0, "sim.T_max", "T_max must be > 0")
    need(sim.steady_tol > 0, "sim.steady_tol", "must be > 0")
    need(sim.extinction_tol > 0, "sim.extinction_tol", "must be > 0")
    need(sim.snapshot_stride >= 1, "sim.snapshot_stride", "must be >= 1")
    need(all(r > 0 for r in e.R_schedule), "eigen.R_schedule", "radii must be > 0")
    need(list(e.R_schedule) == sorted(e.R_schedule), "eigen.R_schedule", "radii must increase")
    need(e.tol > 0 and e.line_tol > 0, "eigen.tol", "must be > 0")
    need(e.max_iter >= 1, "eigen.max_iter", "must be >= 1")
    need(t.c_max > 0, "thresholds.c_max", "must be > 0")
    need(t.n_scan >= 2, "thresholds.n_scan", "must be >= 2")
    need(t.bisect_tol > 0, "thresholds.bisect_tol", "must be > 0")
    need(0 < tail.window_lo_factor, "tail.window_lo_factor", "must be > 0")
    need(0 < tail.window_hi_factor <= 1, "tail.window_hi_factor", "must lie in (0, 1]")
    need(1 <= out.precision <= 17, "output.precision", "must lie in [1, 17]")
    return replace(cfg, operator=replace(o, normalization=norm, drift_scheme=o.drift_scheme.lower()))


def parse_config_text(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="\x00none")
    parser.optionxform = str
    try:
        parser.read_string("[\x00top]\n" + text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    values = {name: {} for name in SECTIONS}
    owners = {}
    for name, cls in SECTIONS.items():
        for f in fields(cls):
            owners.setdefault(f.name, []).append(name)
    for section in parser.sections():
        for key, raw in parser.items(section):
            if section == "\x00top":
                homes = owners.get(key, [])
                if len(homes) != 1:
                    raise ConfigurationError(
                        f"{key}: unknown key" if not homes else
                        f"{key}: ambiguous outside a section (in {', '.join(homes)})")
                target = homes[0]
            else:
                if section not in SECTIONS:
                    raise ConfigurationError(f"[{section}]: unknown section")
                target = section
            cls = SECTIONS[target]
            names = {f.name: f for f in fields(cls)}
            if key not in names:
                raise ConfigurationError(f"{target}.{key}: unknown key")
            default = getattr(cls(), key)
            values[target][key] = _convert(target, key, raw, default)
    cfg = RunConfig(**{name: SECTIONS[name](**vals) for name, vals in values.items()})
    return _validate(cfg)


def parse_config(path, echo: bool = True) -> RunConfig:
    """Load, validate and (optionally) echo the effective config to the output directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    cfg = parse_config_text(path.read_text())
    if echo:
        out = cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        (out / "config_effective.ini").write_text(cfg.to_ini())
    return cfg
