"""Optical-microtrap potentials, separation schedules and closed-form estimates."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

STAGES = ("I", "II", "III")


def single_well(x, center, V0, sigma):
    """Gaussian well ``-V0 exp(-(x - center)^2 / (2 sigma^2))``."""
    x = np.asarray(x, dtype=float)
    return -V0 * np.exp(-((x - center) ** 2) / (2.0 * sigma**2))


@dataclass(frozen=True)
class TrapConfig:
    """Stage-tagged trap and interaction parameters (dimensionless units).

    ``q`` holds one relative intensity offset per well.  Stage II always has
    two wells at ``-d/2, +d/2``.  Stages I and III have ``len(q)`` equally
    spaced wells ``d`` apart, centred on the origin.  When ``split_levels`` is
    given the wells instead sit on a binary tree: well ``j`` (bits
    ``b_1 ... b_n``) is centred at ``sum_s (b_s - 1/2) * split_levels[s]``.
    ``origin`` shifts the whole layout.
    """

    stage: str
    V0: float
    sigma: float
    q: tuple
    d: float
    U0: float
    N: int
    split_levels: tuple | None = None
    origin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        if self.split_levels is not None:
            object.__setattr__(self, "split_levels", tuple(float(v) for v in self.split_levels))
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if not self.V0 >= 0:
            raise ValueError("V0 must be non-negative")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.d < 0:
            raise ValueError("d must be non-negative")
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.stage == "II" and len(self.q) != 2:
            raise ValueError("stage II needs exactly two asymmetries (one per well)")
        if not self.q:
            raise ValueError("q must list one asymmetry per well")
        if self.split_levels is not None:
            if self.stage == "II":
                raise ValueError("split levels apply to stages I and III only")
            if len(self.q) != 2 ** len(self.split_levels):
                raise ValueError("serial layout needs 2**len(split_levels) wells")
        if any(abs(v) >= 0.5 for v in self.q):
            raise ValueError("asymmetries must be small fractions")

    @property
    def n_wells(self) -> int:
        return len(self.q)

    def centers(self) -> np.ndarray:
        return self.origin + self._layout()

    def _layout(self) -> np.ndarray:
        if self.stage == "II":
            return np.array([-self.d / 2.0, self.d / 2.0])
        if self.split_levels is not None:
            n = len(self.split_levels)
            out = []
            for j in range(2**n):
                bits = [(j >> (n - 1 - s)) & 1 for s in range(n)]
                out.append(sum((b - 0.5) * lv for b, lv in zip(bits, self.split_levels)))
            return np.array(out)
        k = self.n_wells
        return (np.arange(k) - (k - 1) / 2.0) * self.d

    def with_d(self, d: float) -> "TrapConfig":
        return replace(self, d=float(d))

    def replace(self, **changes) -> "TrapConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["q"] = list(self.q)
        if self.split_levels is not None:
            out["split_levels"] = list(self.split_levels)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrapConfig":
        data = dict(data)
        data["q"] = tuple(data["q"])
        if data.get("split_levels") is not None:
            data["split_levels"] = tuple(data["split_levels"])
        return cls(**data)


def stage_potential(cfg: TrapConfig, x):
    """Sum of the weighted Gaussian wells of ``cfg`` evaluated at ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for qi, c in zip(cfg.q, cfg.centers()):
        out += (1.0 + qi) * single_well(x, c, cfg.V0, cfg.sigma)
    return out


def write_potential_csv(cfg: TrapConfig, x, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "V"])
    for xi, vi in zip(np.asarray(x), stage_potential(cfg, x)):
        w.writerow([f"{xi:.17g}", f"{vi:.17g}"])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


@dataclass(frozen=True)
class Schedule:
    """Linear ramp of the well separation from ``d_start`` to ``d_end`` at speed ``v``."""

    d_start: float
    d_end: float
    v: float
    shape: str = "linear"

    def __post_init__(self):
        if not self.v > 0:
            raise ValueError("speed must be positive")
        if self.shape != "linear":
            raise ValueError("only linear schedules are supported")

    @property
    def distance(self) -> float:
        return abs(self.d_end - self.d_start)

    @property
    def duration(self) -> float:
        return self.distance / self.v

    def d_at(self, t):
        sign = 1.0 if self.d_end >= self.d_start else -1.0
        t = np.clip(t, 0.0, self.duration)
        return self.d_start + sign * self.v * t


@dataclass(frozen=True)
class EnergyScales:
    E_asym: float
    E_int: float
    E_exc: float
    E_D: float
    sigma0: float
    D: float


def asymmetry_scale(cfg: TrapConfig) -> float:
    return max(abs(v) for v in cfg.q)


def energy_scales(cfg: TrapConfig, D: float | None = None) -> EnergyScales:
    """Order-of-magnitude energy scales that must be well separated.

    ``D`` defaults to ``2 sigma``, the spacing at which the merged trap looks
    like a square well.  ``sigma0 = (V0 / sigma^2)^(1/4)``.
    """
    if D is None:
        D = 2.0 * cfg.sigma
    if not D > 0:
        raise ValueError("D must be positive")
    if cfg.V0 == 0:
        raise ValueError("energy scales need a nonzero trap depth")
    sigma0 = (cfg.V0 / cfg.sigma**2) ** 0.25
    q = asymmetry_scale(cfg)
    if cfg.stage == "II":
        E_asym = cfg.N * q * cfg.V0
        E_int = (cfg.N - 1) * abs(cfg.U0) / sigma0
        E_D = (math.pi / (2.0 * D)) ** 2
    else:
        E_asym = q * cfg.V0
        E_int = abs(cfg.U0) / sigma0
        E_D = (math.pi / (cfg.N * D)) ** 2
    return EnergyScales(E_asym, E_int, sigma0**-2, E_D, sigma0, D)


def hierarchy_satisfied(scales: EnergyScales, margin: float = 10.0) -> bool:
    if not margin > 1:
        raise ValueError("margin must exceed 1")
    return scales.E_asym * margin <= min(scales.E_int, scales.E_exc, scales.E_D)


@dataclass(frozen=True)
class LZEstimate:
    gap: float
    slope: float
    v_ad: float


def lz_estimate(gap: float, cfg: TrapConfig) -> LZEstimate:
    """Speed below which a level crossing with ``gap`` is passed adiabatically."""
    if gap < 0:
        raise ValueError("gap must be non-negative")
    slope = math.sqrt(cfg.N * cfg.V0) / cfg.sigma**2
    return LZEstimate(gap, slope, gap**2 / slope)


def dephasing_bound(cfg: TrapConfig, phi_max: float, distance: float) -> float:
    """Lowest speed keeping the asymmetry phase ``N q V0 * distance / v`` below ``phi_max``."""
    if not phi_max > 0:
        raise ValueError("phi_max must be positive")
    E_asym = cfg.N * asymmetry_scale(cfg) * cfg.V0
    return E_asym * distance / phi_max


# Caption parameters of the published figures.
FIG2_STAGE_I = TrapConfig("I", V0=10.0, sigma=0.5, q=(-1e-4, 0.0, 1e-4), d=0.0, U0=10.0, N=3)
FIG3_STAGE_III = FIG2_STAGE_I.replace(stage="III")
FIG4_STAGE_II = TrapConfig("II", V0=30.0, sigma=0.5, q=(0.0, 1e-4), d=0.0, U0=-4.0, N=3)
D_FINAL = 3.0


@dataclass(frozen=True)
class Preset:
    name: str
    cfg: TrapConfig
    d_start: float
    d_end: float
    levels: int = 8
    speeds: tuple = field(default_factory=tuple)


PRESETS = {
    "fig2": Preset("fig2", FIG2_STAGE_I, 0.0, D_FINAL),
    "fig3": Preset("fig3", FIG3_STAGE_III, 0.0, D_FINAL),
    "fig4": Preset("fig4", FIG4_STAGE_II, 0.0, D_FINAL),
    "fig5": Preset("fig5", FIG4_STAGE_II, 0.0, D_FINAL),
}
