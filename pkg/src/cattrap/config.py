"""Run configuration: INI-style ``key = value`` files, presets and range strings.

Example::

    [stage II]
    V0 = 30
    sigma = 0.5
    q = 0, 1e-4
    U0 = -4
    N = 3

    [sweep]
    v = 0.05:1.0:log20
    dt = 0.01

Unknown sections and keys are rejected.  Values given on the command line
override the file.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .potential import FIG2_STAGE_I, FIG3_STAGE_III, FIG4_STAGE_II, STAGES, TrapConfig
from .units import SPECIES, Species

OUTPUT_ENV = "CATTRAP_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def parse_range(text: str) -> tuple:
    """Speeds or separations from ``"a"``, ``"a,b,c"``, ``"a:b:n"`` or ``"a:b:logn"``."""
    text = str(text).strip()
    try:
        if ":" in text:
            a, b, n = text.split(":")
            a, b = float(a), float(b)
            if n.startswith("log"):
                count = int(n[3:])
                if a <= 0 or b <= 0:
                    raise ConfigError(f"log range needs positive ends: {text!r}")
                vals = np.geomspace(a, b, count)
            else:
                vals = np.linspace(a, b, int(n))
            if len(vals) < 1:
                raise ConfigError(f"empty range {text!r}")
            return tuple(float(v) for v in vals)
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse range {text!r}") from exc


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


STAGE_KEYS = {"V0": float, "sigma": float, "q": _floats, "d": float, "U0": float, "N": int, "split_levels": _floats}


@dataclass
class RunConfig:
    """Every tunable of a CLI run."""

    stages: dict = field(default_factory=lambda: {"I": FIG2_STAGE_I, "II": FIG4_STAGE_II, "III": FIG3_STAGE_III})
    spacing: float | None = None
    d_range: tuple = tuple(float(v) for v in np.linspace(0.0, 3.0, 31))
    k: int = 8
    v: tuple = (0.2,)
    dt: float = 0.01
    d_start: float = 0.0
    d_end: float = 3.0
    v_I: float = 0.2
    v_II: float = 0.15
    v_III: float = 0.2
    mode: str = "parallel"
    handoff: str = "sudden"
    floor: float = 0.95
    phases: tuple | None = None
    delta_scan: int = 16
    shots: int = 0
    seed: int = 0
    alpha: float | None = None
    beta: float | None = None
    theta: float = 0.0
    visibility: float | None = None
    n_atoms: int = 3
    subset: tuple | None = None
    species: tuple = ("Na", "Rb")
    custom_species: tuple = ()
    output_dir: str = "."
    threads: int = 1

    def validate(self) -> "RunConfig":
        if self.spacing is not None and not self.spacing > 0:
            raise ConfigError("grid.spacing: must be positive")
        if not self.dt > 0:
            raise ConfigError("sweep.dt: must be positive")
        if self.k < 1:
            raise ConfigError("spectrum.k: must be at least 1")
        if not self.v or any(x <= 0 for x in self.v):
            raise ConfigError("sweep.v: speeds must be positive")
        if len(self.d_range) > 1:
            steps = np.diff(self.d_range)
            if not (np.all(steps > 0) or np.all(steps < 0)):
                raise ConfigError("spectrum.d: separations must be monotone")
        if any(d < 0 for d in self.d_range):
            raise ConfigError("spectrum.d: separations must be non-negative")
        for name in ("v_I", "v_II", "v_III"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"protocol.{name}: must be positive")
        if self.mode not in ("parallel", "serial-splitting"):
            raise ConfigError("protocol.mode: must be parallel or serial-splitting")
        if self.handoff not in ("sudden", "adiabatic"):
            raise ConfigError("protocol.handoff: must be sudden or adiabatic")
        if not 0 < self.floor <= 1:
            raise ConfigError("protocol.floor: must lie in (0, 1]")
        if self.delta_scan < 3:
            raise ConfigError("protocol.delta_scan: need at least 3 points")
        if self.shots < 0:
            raise ConfigError("interfere.shots: must be non-negative")
        if self.threads < 1:
            raise ConfigError("output.threads: must be at least 1")
        for s in self.species:
            if s not in SPECIES and s not in {c.name for c in self.species_objects(custom_only=True)}:
                raise ConfigError(f"table1.species: unknown species {s!r}")
        return self

    def species_objects(self, custom_only: bool = False) -> list:
        custom = []
        for entry in self.custom_species:
            try:
                name, mass, a = entry.split(":")
                custom.append(Species.from_atomic_units(name, float(mass), float(a)))
            except ValueError as exc:
                raise ConfigError(f"table1.custom_species: {entry!r} is not name:mass_u:a0 ({exc})") from exc
        if custom_only:
            return custom
        named = {c.name: c for c in custom}
        out = [named.get(s) or SPECIES[s] for s in self.species]
        out += [c for c in custom if c.name not in self.species]
        return out

    def resolved_output_dir(self, flag: str | None = None) -> str:
        if flag:
            return flag
        return os.environ.get(OUTPUT_ENV) or self.output_dir


# section -> {key: (attribute, parser)}
_SCALAR_KEYS = {
    "grid": {"spacing": ("spacing", float)},
    "spectrum": {"d": ("d_range", parse_range), "k": ("k", int)},
    "sweep": {
        "v": ("v", parse_range),
        "dt": ("dt", float),
        "d_start": ("d_start", float),
        "d_end": ("d_end", float),
    },
    "protocol": {
        "v_I": ("v_I", float),
        "v_II": ("v_II", float),
        "v_III": ("v_III", float),
        "mode": ("mode", str),
        "handoff": ("handoff", str),
        "floor": ("floor", float),
        "phases": ("phases", _floats),
        "delta_scan": ("delta_scan", int),
    },
    "interfere": {
        "alpha": ("alpha", float),
        "beta": ("beta", float),
        "theta": ("theta", float),
        "visibility": ("visibility", float),
        "n_atoms": ("n_atoms", int),
        "subset": ("subset", lambda s: tuple(int(v) for v in s.split(",") if v.strip())),
        "shots": ("shots", int),
        "seed": ("seed", int),
    },
    "table1": {
        "species": ("species", lambda s: tuple(v.strip() for v in s.split(",") if v.strip())),
        "custom_species": ("custom_species", lambda s: tuple(v.strip() for v in s.split(",") if v.strip())),
    },
    "output": {"dir": ("output_dir", str), "threads": ("threads", int)},
}


def _parser():
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive (V0, U0, N)
    return cp


def loads(text: str, base: RunConfig | None = None) -> RunConfig:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from exc
    cfg = replace(base) if base is not None else RunConfig()
    cfg.stages = dict(cfg.stages)
    for section in cp.sections():
        if section.startswith("stage "):
            stage = section[6:].strip()
            if stage not in STAGES:
                raise ConfigError(f"[{section}]: unknown stage")
            data = cfg.stages[stage].to_dict()
            for key, raw in cp[section].items():
                if key not in STAGE_KEYS:
                    raise ConfigError(f"[{section}] {key}: unknown key")
                try:
                    data[key] = STAGE_KEYS[key](raw)
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from exc
            try:
                cfg.stages[stage] = TrapConfig.from_dict(data)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{section}]: {exc}") from exc
        elif section in _SCALAR_KEYS:
            keys = _SCALAR_KEYS[section]
            for key, raw in cp[section].items():
                if key not in keys:
                    raise ConfigError(f"[{section}] {key}: unknown key")
                attr, conv = keys[key]
                try:
                    setattr(cfg, attr, conv(raw))
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from exc
        else:
            raise ConfigError(f"[{section}]: unknown section")
    return cfg.validate()


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def dumps(cfg: RunConfig) -> str:
    cp = _parser()
    for stage in STAGES:
        tc = cfg.stages[stage]
        sec = {k: _fmt(getattr(tc, k)) for k in ("V0", "sigma", "q", "d", "U0", "N")}
        if tc.split_levels is not None:
            sec["split_levels"] = _fmt(tc.split_levels)
        cp[f"stage {stage}"] = sec
    for section, keys in _SCALAR_KEYS.items():
        sec = {}
        for key, (attr, _) in keys.items():
            val = getattr(cfg, attr)
            if val is None:
                continue
            if attr in ("d_range", "v"):
                val = ",".join(repr(float(x)) for x in val)
            elif attr in ("species", "custom_species", "subset"):
                val = ",".join(str(x) for x in val)
            if val == "":
                continue
            sec[key] = _fmt(val)
        cp[section] = sec
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _d_grid(a, b, n):
    return tuple(float(v) for v in np.linspace(a, b, n))


PRESET_NAMES = ("fig2", "fig3", "fig4", "fig5", "table1")


def preset(name: str) -> RunConfig:
    """Configuration reproducing one published figure or table."""
    base = RunConfig()
    if name == "fig2":
        return replace(base, d_range=_d_grid(0.0, 3.0, 31), k=8)
    if name == "fig3":
        return replace(base, v=parse_range("0.02:1.0:log20"))
    if name == "fig4":
        return replace(base, d_range=_d_grid(0.0, 3.0, 31), k=8)
    if name == "fig5":
        return replace(base, v=parse_range("0.05:1.0:log20"))
    if name == "table1":
        return replace(base, species=("Na", "Rb"))
    raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")


def field_names() -> list:
    return [f.name for f in fields(RunConfig)]
