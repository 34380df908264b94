"""End-to-end interferometry pipeline and critical-speed searches.

The pipeline:

I.   N atoms, one per well, are merged into a single trap (repulsive).
     The interaction is then switched to attractive.
II.  The merged trap is split in two, leaving a cat of all-left and
     all-right components.  The interaction is switched back to repulsive.
III. Each branch is split into N wells, one atom per well.
IV.  Each atom's left/right pair is read out through a beamsplitter
     (see :mod:`cattrap.interference`).
"""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    DEFAULT_DT,
    DYNAMICS_SPACING,
    CatParameters,
    Schedule,
    branch_config,
    branch_phase,
    energy_spread,
    extract_cat,
    localized_doublet,
    propagate,
    safe_dt,
    sudden_switch,
    sweep_and_project,
    sweep_grid,
)
from .hamiltonian import Hamiltonian, eigensolve, one_particle_ground
from .interference import Fringe, MeasurementModel, SampleStats, fringe_scan, sample_outcomes
from .potential import (
    FIG2_STAGE_I,
    FIG3_STAGE_III,
    FIG4_STAGE_II,
    TrapConfig,
    energy_scales,
    hierarchy_satisfied,
    single_well,
    stage_potential,
)
from .qgrid import Grid, WaveFunction, product_state

log = logging.getLogger(__name__)


class BracketError(ValueError):
    """The metric does not change sides of its threshold inside the bracket."""


class PreparationWarning(UserWarning):
    pass


# -- critical speeds ----------------------------------------------------------


@dataclass
class Metric:
    """A scalar figure of merit of a sweep at speed ``v`` and its pass threshold.

    ``sense`` is ``"ge"`` when values at or above ``threshold`` pass.
    """

    name: str
    evaluate: object
    threshold: float
    sense: str = "ge"

    def passes(self, value: float) -> bool:
        return value >= self.threshold if self.sense == "ge" else value <= self.threshold


@dataclass
class CriticalSearch:
    v: float
    lower: float
    upper: float
    evaluations: list = field(default_factory=list)  # (v, value) in evaluation order


def find_critical_velocity(metric: Metric, bracket, rel_width: float = 0.05) -> CriticalSearch:
    """Speed at which ``metric`` crosses its threshold, by bisection in ``log v``.

    Both ends of ``bracket`` are evaluated first and must fall on opposite
    sides of the threshold.  Bisection stops once ``upper / lower <= 1 +
    rel_width``; the geometric midpoint is returned.
    """
    lo, hi = sorted(float(v) for v in bracket)
    if not lo > 0:
        raise ValueError("speeds must be positive")
    evals = []

    def ok(v):
        val = float(metric.evaluate(v))
        evals.append((v, val))
        log.info("%s(v=%.5g) = %.6g", metric.name, v, val)
        return metric.passes(val)

    ok_lo, ok_hi = ok(lo), ok(hi)
    if ok_lo == ok_hi:
        raise BracketError(f"{metric.name} does not cross {metric.threshold:g} in [{lo:g}, {hi:g}]")
    while hi / lo > 1 + rel_width:
        mid = math.sqrt(lo * hi)
        if ok(mid) == ok_lo:
            lo = mid
        else:
            hi = mid
    return CriticalSearch(math.sqrt(lo * hi), lo, hi, evals)


def retention_metric(cfg: TrapConfig, d_start=0.0, d_end=3.0, dt=DEFAULT_DT, spacing=DYNAMICS_SPACING, k=4, threshold=0.99) -> Metric:
    """Ground-state probability after splitting from the ground state at ``d_start``."""
    def evaluate(v):
        sch = Schedule(d_start, d_end, v)
        return sweep_and_project(None, cfg, sch, k, dt, sweep_grid(cfg, sch, spacing)).ground_probability

    return Metric("ground_probability", evaluate, threshold, "ge")


def doublet_metric(cfg: TrapConfig, d_start=0.0, d_end=3.0, dt=DEFAULT_DT, spacing=DYNAMICS_SPACING, k=4, threshold=0.99) -> Metric:
    """Weight left in the two lowest levels after a two-well split (1 - tunnelling loss)."""
    def evaluate(v):
        sch = Schedule(d_start, d_end, v)
        res = sweep_and_project(None, cfg, sch, k, dt, sweep_grid(cfg, sch, spacing))
        return float(res.projections[:2].sum())

    return Metric("doublet_weight", evaluate, threshold, "ge")


def theta_metric(cfg: TrapConfig, d_start=0.0, d_end=3.0, dt=DEFAULT_DT, spacing=DYNAMICS_SPACING, phi_max=0.1) -> Metric:
    """Relative cat phase after a two-well split."""
    def evaluate(v):
        sch = Schedule(d_start, d_end, v)
        res = sweep_and_project(None, cfg, sch, 2, dt, sweep_grid(cfg, sch, spacing))
        return abs(extract_cat(res.state, res.final_levels).theta)

    return Metric("theta", evaluate, phi_max, "le")


def dephasing_metric(cfg: TrapConfig, q_offset=1e-4, d_start=0.0, d_end=3.0, dt=DEFAULT_DT, spacing=DYNAMICS_SPACING, phi_max=0.1) -> Metric:
    """Phase between the two branches of a cat while each is split into N wells."""
    def evaluate(v):
        return abs(branch_phase(cfg.with_d(d_start), Schedule(d_start, d_end, v), q_offset, dt, spacing).delta_phase)

    return Metric("branch_phase", evaluate, phi_max, "le")


@dataclass(frozen=True)
class CriticalVelocities:
    """Lower (dephasing) and upper (adiabaticity) speed limits of one stage."""

    v_c1: float
    v_c2: float

    @property
    def window_nonempty(self) -> bool:
        return self.v_c1 < self.v_c2


# -- Mott-insulator-like start ------------------------------------------------


def mi_orbitals(cfg: TrapConfig, grid: Grid) -> tuple[list, np.ndarray]:
    """Ground orbital of each well on its own, and their overlap matrix."""
    x, h = grid.x, grid.spacing
    orbs = []
    for q, c in zip(cfg.q, cfg.centers()):
        _, w = one_particle_ground(grid, (1.0 + q) * single_well(x, c, cfg.V0, cfg.sigma))
        orbs.append(w)
    S = np.array([[np.dot(a, b) * h for b in orbs] for a in orbs])
    return orbs, S


def mi_state_preparation(cfg: TrapConfig, grid: Grid | None = None, spacing: float = 0.1) -> WaveFunction:
    """Symmetrised product of one isolated-well ground orbital per atom.

    Warns with :class:`PreparationWarning` when neighbouring wells are closer
    than ``4 sigma``; the largest orbital overlap is in the message.
    """
    if cfg.n_wells != cfg.N:
        raise ValueError("one well per atom is required")
    if grid is None:
        grid = Grid.for_trap(cfg, spacing=spacing)
    orbs, S = mi_orbitals(cfg, grid)
    c = np.sort(cfg.centers())
    if len(c) > 1 and np.min(np.diff(c)) < 4 * cfg.sigma:
        off = np.max(np.abs(S - np.diag(np.diag(S))))
        warnings.warn(f"wells closer than 4 sigma; largest orbital overlap {off:.3g}", PreparationWarning, stacklevel=2)
    return product_state(orbs, grid, cfg.N)


# -- full pipeline ------------------------------------------------------------


@dataclass
class ProtocolRun:
    """Everything needed to run the four stages.

    ``handoff`` selects how the interaction/depth swaps between stages are
    treated: ``"sudden"`` keeps the state and scores its overlap with the new
    ground state; ``"adiabatic"`` continues from the new ground state after
    checking that the gap stays open along a linear parameter ramp.
    ``q_offset`` is the extra depth of the right branch in stage III; by
    default the stage-II depth difference of the right well.
    """

    cfg_I: TrapConfig = FIG2_STAGE_I
    cfg_II: TrapConfig = FIG4_STAGE_II
    cfg_III: TrapConfig = FIG3_STAGE_III
    v_I: float = 0.2
    v_II: float = 0.15
    v_III: float = 0.2
    d_final: float = 3.0
    phases: tuple | None = None
    mode: str = "parallel"
    handoff: str = "sudden"
    dt: float = DEFAULT_DT
    spacing: float = DYNAMICS_SPACING
    retention_floor: float = 0.95
    q_offset: float | None = None
    fringe_points: int = 16
    shots: int = 0
    seed: int = 0
    k: int = 4

    def __post_init__(self):
        if self.mode not in ("parallel", "serial-splitting"):
            raise ValueError("mode must be 'parallel' or 'serial-splitting'")
        if self.handoff not in ("sudden", "adiabatic"):
            raise ValueError("handoff must be 'sudden' or 'adiabatic'")
        if (self.cfg_I.stage, self.cfg_II.stage, self.cfg_III.stage) != ("I", "II", "III"):
            raise ValueError("stage configs must be tagged I, II, III in order")
        n = self.cfg_I.N
        if self.cfg_II.N != n or self.cfg_III.N != n:
            raise ValueError("all stages must hold the same number of atoms")
        if self.cfg_I.n_wells != n or self.cfg_III.n_wells != n:
            raise ValueError("stages I and III need one well per atom")
        if self.phases is None:
            self.phases = (0.0,) * n
        self.phases = tuple(float(p) for p in self.phases)
        if len(self.phases) != n:
            raise ValueError("need one phase per atom")
        if self.mode == "serial-splitting" and n & (n - 1):
            raise ValueError("serial splitting needs a power-of-two atom count")
        for v in (self.v_I, self.v_II, self.v_III):
            if not v > 0:
                raise ValueError("speeds must be positive")

    @property
    def n_atoms(self) -> int:
        return self.cfg_I.N

    @property
    def branch_offset(self) -> float:
        if self.q_offset is not None:
            return self.q_offset
        return self.cfg_II.q[1] - self.cfg_II.q[0]


@dataclass(frozen=True)
class StageMetric:
    stage: str
    name: str
    value: float
    floor: float | None = None

    @property
    def ok(self) -> bool:
        return self.floor is None or self.value >= self.floor


@dataclass
class ProtocolReport:
    run: ProtocolRun
    metrics: list
    cat: CatParameters | None
    theta_II: float
    branch_delta: float
    theta_total: float
    model: MeasurementModel | None
    fringe: Fringe | None
    samples: SampleStats | None = None

    @property
    def failures(self) -> list:
        return [m for m in self.metrics if not m.ok]

    @property
    def success(self) -> bool:
        return not self.failures

    @property
    def failed_stage(self) -> str | None:
        f = self.failures
        return f[0].stage if f else None

    @property
    def visibility(self) -> float:
        return self.model.visibility if self.model is not None else math.nan

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage", "metric", "value", "floor", "ok"])
        for m in self.metrics:
            w.writerow([m.stage, m.name, f"{m.value:.17g}", "" if m.floor is None else f"{m.floor:.17g}", int(m.ok)])
        return buf.getvalue()

    def to_text(self) -> str:
        r = self.run
        lines = [
            f"atoms: {r.n_atoms}  mode: {r.mode}  handoff: {r.handoff}",
            f"speeds: v_I={r.v_I:g} v_II={r.v_II:g} v_III={r.v_III:g}  dt={r.dt:g}  h={r.spacing:g}",
            "",
            f"{'stage':<10}{'metric':<28}{'value':>14}{'floor':>8}  status",
        ]
        for m in self.metrics:
            floor = "" if m.floor is None else f"{m.floor:.3g}"
            lines.append(f"{m.stage:<10}{m.name:<28}{m.value:>14.6g}{floor:>8}  {'ok' if m.ok else 'FAIL'}")
        lines.append("")
        if self.cat is not None:
            lines.append(f"cat: alpha={self.cat.alpha:.6f} beta={self.cat.beta:.6f} visibility={self.visibility:.6f}")
        lines.append(f"theta_II={self.theta_II:.6g}  branch_phase={self.branch_delta:.6g}  theta_total={self.theta_total:.6g}")
        if self.fringe is not None:
            lines.append(f"fringe amplitude over {len(self.fringe.delta)} phases: {self.fringe.amplitude:.6f}")
        if self.samples is not None:
            lines.append(f"sampled product mean: {self.samples.mean:.6f} +- {self.samples.stderr:.6f} ({len(self.samples.products)} shots)")
        lines.append("result: " + ("success" if self.success else f"failure at stage {self.failed_stage}"))
        return "\n".join(lines) + "\n"


def _serial_path(cfg: TrapConfig, d_final: float, v: float, merge: bool):
    """Split (or merge) a binary tree of wells one level at a time.

    Level ``s`` ends ``d_final * 2**(n-1-s)`` wide, which gives equally
    spaced wells ``d_final`` apart.  Returns ``(cfg_widest, cfg_at, duration)``.
    """
    n = int(round(math.log2(cfg.n_wells)))
    finals = [d_final * 2 ** (n - 1 - s) for s in range(n)]
    order = list(range(n))[::-1] if merge else list(range(n))
    durations = [finals[s] / v for s in order]
    total = sum(durations)

    def cfg_at(t):
        levels = [0.0 if not merge else f for f in finals]
        elapsed = t
        for s, dur in zip(order, durations):
            frac = min(max(elapsed / dur, 0.0), 1.0)
            levels[s] = finals[s] * (1 - frac if merge else frac)
            elapsed -= dur
            if elapsed <= 0:
                break
        return cfg.replace(split_levels=tuple(levels), d=d_final)

    return cfg.replace(split_levels=tuple(finals), d=d_final), cfg_at, total


def _merged(cfg: TrapConfig) -> TrapConfig:
    """All wells of ``cfg`` on top of each other."""
    if cfg.split_levels is not None:
        return cfg.replace(d=0.0, split_levels=(0.0,) * len(cfg.split_levels))
    return cfg.with_d(0.0)


def _handoff_gap(grid, cfg_a: TrapConfig, cfg_b: TrapConfig, points: int = 9) -> float:
    """Smallest ground gap along a linear ramp of potential and interaction."""
    Va, Vb = stage_potential(cfg_a, grid.x), stage_potential(cfg_b, grid.x)
    gaps = []
    for s in np.linspace(0.0, 1.0, points):
        u = (1 - s) * cfg_a.U0 + s * cfg_b.U0
        H = Hamiltonian(grid, cfg_b.replace(U0=u), validate=False).with_potential((1 - s) * Va + s * Vb)
        e = eigensolve(H, 2).energies
        gaps.append(e[1] - e[0])
    return float(min(gaps))


def _handoff(psi_c, grid, cfg_a, cfg_b, run: ProtocolRun, stage: str, metrics: list):
    rep = sudden_switch(WaveFunction.from_sector(grid, run.n_atoms, psi_c), cfg_a, cfg_b, run.k)
    if run.handoff == "sudden":
        metrics.append(StageMetric(stage, "switch_ground_overlap", rep.ground_overlap, run.retention_floor))
        return psi_c
    metrics.append(StageMetric(stage, "switch_ground_overlap", rep.ground_overlap))
    metrics.append(StageMetric(stage, "ramp_min_gap", _handoff_gap(grid, cfg_a, cfg_b), 1e-3))
    g = eigensolve(Hamiltonian(grid, cfg_b, validate=False), 1).vectors[:, 0].astype(np.complex128)
    ov = np.vdot(g, psi_c)
    return g * (ov / abs(ov) if abs(ov) > 0 else 1.0)


def run_protocol(run: ProtocolRun) -> ProtocolReport:
    """Execute stages I-IV and collect every intermediate metric.

    Stages keep running after a metric drops below the floor so the report
    is complete; ``report.failed_stage`` names the first failing stage.

    Raises
    ------
    ValueError
        If any stage configuration violates the energy-scale hierarchy.
    """
    for cfg in (run.cfg_I, run.cfg_II, run.cfg_III):
        if not hierarchy_satisfied(energy_scales(cfg), 10.0):
            raise ValueError(f"stage {cfg.stage}: energy scales not separated by a factor 10")
    N, D = run.n_atoms, run.d_final
    serial = run.mode == "serial-splitting"
    metrics: list[StageMetric] = []

    # one grid holds stages I and II; each stage-III branch is simulated on its own
    if serial:
        wide_I, path_I, dur_I = _serial_path(run.cfg_I, D, run.v_I, merge=True)
    else:
        wide_I = run.cfg_I.with_d(D)
    grid = Grid.for_trap(wide_I, spacing=run.spacing)
    if not grid.contains_wells(run.cfg_II.with_d(D)):
        grid = Grid.for_trap(run.cfg_II, d_max=D, spacing=run.spacing)

    # stage I: MI-like product state merged into one trap
    merged_I = _merged(run.cfg_I) if not serial else path_I(dur_I)
    psi0 = mi_state_preparation(wide_I, grid)
    start = eigensolve(Hamiltonian(grid, wide_I), 1).vectors[:, 0]
    metrics.append(StageMetric("I", "mi_ground_overlap", float(abs(np.vdot(start, psi0.sector())) ** 2)))
    if serial:
        prop = propagate(psi0, wide_I, None, run.dt, grid, cfg_at=path_I, duration=dur_I)
    else:
        prop = propagate(psi0, run.cfg_I, Schedule(D, 0.0, run.v_I), run.dt, grid)
    c = prop.state.sector()
    g_I = eigensolve(Hamiltonian(grid, merged_I), 1).vectors[:, 0]
    metrics.append(StageMetric("I", "merge_ground_probability", float(abs(np.vdot(g_I, c)) ** 2), run.retention_floor))
    metrics.append(StageMetric("I", "norm_drift", prop.info.norm_drift))

    # I -> II: repulsive merged trap -> attractive stage-II trap at d = 0
    c = _handoff(c, grid, merged_I, run.cfg_II.with_d(0.0), run, "I->II", metrics)

    # stage II: two-well split; a switched state far from an eigenstate needs finer steps
    dt_II = safe_dt(run.dt, energy_spread(Hamiltonian(grid, run.cfg_II.with_d(0.0), validate=False), c))
    metrics.append(StageMetric("II", "time_step", dt_II))
    res = sweep_and_project(c, run.cfg_II, Schedule(0.0, D, run.v_II), run.k, dt_II, grid)
    cat = extract_cat(res.state, res.final_levels)
    theta_II = cat.theta
    metrics.append(StageMetric("II", "doublet_weight", cat.doublet_weight, run.retention_floor))
    metrics.append(StageMetric("II", "visibility", cat.visibility))
    metrics.append(StageMetric("II", "theta", theta_II))

    # II -> III: each branch back to repulsive, merged trap centred on its well
    psi_L, psi_R, _ = localized_doublet(res.final_levels)
    offset = run.branch_offset
    for name, psi_b, origin, br in (("L", psi_L, -D / 2, "L"), ("R", psi_R, D / 2, "R")):
        target = _merged(branch_config(run.cfg_III, br, offset, origin))
        source = run.cfg_II.replace(d=D)
        rep = sudden_switch(WaveFunction.from_sector(grid, N, psi_b), source, target, 1)
        floor = run.retention_floor if run.handoff == "sudden" else None
        metrics.append(StageMetric("II->III", f"switch_ground_overlap_{name}", rep.ground_overlap, floor))

    # stage III: split each branch into N wells
    if serial:
        delta, ret_L, ret_R = _serial_branches(run, offset)
    else:
        bp = branch_phase(run.cfg_III.with_d(0.0), Schedule(0.0, D, run.v_III), offset, run.dt, run.spacing)
        delta, ret_L, ret_R = bp.delta_phase, bp.retention_L, bp.retention_R
    metrics.append(StageMetric("III", "ground_probability_L", ret_L, run.retention_floor))
    metrics.append(StageMetric("III", "ground_probability_R", ret_R, run.retention_floor))
    metrics.append(StageMetric("III", "branch_phase", delta))

    # stage IV: readout
    theta_total = theta_II + delta
    w = math.sqrt(cat.doublet_weight)
    model = MeasurementModel.with_phases(N, cat.alpha / w, cat.beta / w, theta_total, run.phases)
    fringe = fringe_scan(model, run.fringe_points)
    metrics.append(StageMetric("IV", "visibility", model.visibility))
    metrics.append(StageMetric("IV", "fringe_amplitude", fringe.amplitude))
    samples = sample_outcomes(model, run.shots, run.seed) if run.shots else None
    return ProtocolReport(run, metrics, cat, theta_II, delta, theta_total, model, fringe, samples)


def _serial_branches(run: ProtocolRun, offset: float):
    states, rets = [], []
    for br in ("L", "R"):
        cfg = branch_config(run.cfg_III, br, offset)
        wide, path, dur = _serial_path(cfg, run.d_final, run.v_III, merge=False)
        grid = Grid.for_trap(wide, spacing=run.spacing)
        start = path(0.0)
        g0 = eigensolve(Hamiltonian(grid, start, validate=False), 1).vectors[:, 0]
        prop = propagate(g0, wide, None, run.dt, grid, cfg_at=path, duration=dur)
        g1 = eigensolve(Hamiltonian(grid, wide), 1).vectors[:, 0]
        c = prop.state.sector()
        states.append(c)
        rets.append(float(abs(np.vdot(g1, c)) ** 2))
    ov = np.vdot(states[0], states[1])
    return float(np.angle(ov)), rets[0], rets[1]
