"""Time evolution while the wells are pulled apart, and analysis of the result.

The propagator is Crank-Nicolson on the bosonic sector.  Each step solves
``(1 + i tau H') psi_{k+1} = (1 - i tau H') psi_k`` with ``tau = dt / 2`` and
``H' = H(t_k + dt/2) - E_k``, where ``E_k = <psi_k|H|psi_k>``.  Subtracting
the instantaneous mean energy removes the fast global phase rotation from
the discrete dynamics; the phase ``sum_k E_k dt`` is restored exactly at the
end.  The Cayley map stays exactly unitary, and the step error now scales
with the energy spread of the state instead of its absolute energy.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .hamiltonian import Eigenpairs, Hamiltonian, eigensolve
from .potential import Schedule, TrapConfig, stage_potential
from .qgrid import Grid, GridMismatchError, WaveFunction

log = logging.getLogger(__name__)

DEFAULT_DT = 0.01
DYNAMICS_SPACING = 0.2
NORM_LIMIT = 1e-6


class PropagationError(RuntimeError):
    pass


class InstabilityError(PropagationError):
    pass


@dataclass
class StepInfo:
    steps: int
    dt: float
    iterations: int
    global_phase: float
    norm_drift: float


def crank_nicolson(
    psi0,
    hopping: sp.csr_matrix,
    diag_at,
    duration: float,
    dt: float = DEFAULT_DT,
    *,
    tol: float = 1e-12,
    maxiter: int = 5000,
    observer=None,
    check_spread: bool = True,
) -> tuple[np.ndarray, StepInfo]:
    """Propagate ``i dpsi/dt = (K + diag(w(t))) psi`` for ``duration``.

    Parameters
    ----------
    psi0 : array
        Initial coefficients (copied).
    hopping : csr_matrix
        Real symmetric, time-independent off-diagonal part ``K``.
    diag_at : callable
        ``t -> w(t)``, real diagonal at time ``t``.
    duration, dt : float
        ``dt`` is shrunk so that a whole number of steps fits ``duration``.
    observer : callable, optional
        Called as ``observer(t, psi)`` at ``t = 0`` and after every step with
        the physical (phase-restored) state.

    Raises
    ------
    ValueError
        If ``dt`` times the energy spread of ``psi0`` is not below 0.1.
    PropagationError
        If a linear solve fails to converge.
    InstabilityError
        If the norm drifts by more than ``1e-6``.
    """
    psi = np.array(psi0, dtype=np.complex128)
    n = psi.shape[0]
    if duration < 0:
        raise ValueError("duration must be non-negative")
    steps = max(1, int(math.ceil(duration / dt - 1e-9))) if duration > 0 else 0
    dt = duration / steps if steps else dt
    tau = 0.5 * dt
    K = hopping
    indptr, indices, data = K.indptr, K.indices.astype(np.int64), K.data.astype(np.float64)
    indptr = indptr.astype(np.int64)
    norm0 = float(np.linalg.norm(psi))
    if check_spread and steps:
        w0 = np.asarray(diag_at(0.0), dtype=np.float64)
        hp = np.empty(n, np.complex128)
        _kernels.matvec(indptr, indices, data, w0, psi, hp)
        e = np.vdot(psi, hp).real / norm0**2
        spread = math.sqrt(max(np.vdot(hp, hp).real / norm0**2 - e * e, 0.0))
        if spread * dt >= 0.1:
            raise ValueError(f"dt={dt:g} does not resolve the energy spread {spread:.3g} (dt*spread >= 0.1)")
    rhs = np.empty(n, np.complex128)
    bufs = [np.empty(n, np.complex128) for _ in range(4)]
    prev = psi.copy()
    phase = 0.0
    iters = 0
    if observer is not None:
        observer(0.0, psi)
    for k in range(steps):
        w = np.asarray(diag_at((k + 0.5) * dt), dtype=np.float64)
        e = _kernels.cn_rhs(indptr, indices, data, w, tau, psi, rhs) / np.vdot(psi, psi).real
        guess = 2.0 * psi - prev
        it = _kernels.cocg_solve(indptr, indices, data, w - e, tau, rhs, guess, tol, maxiter, *bufs)
        if it < 0:
            raise PropagationError(f"linear solve did not converge at step {k} (t={(k + 1) * dt:.6g})")
        iters += it
        phase += e * dt
        prev = psi
        psi = guess
        if observer is not None:
            observer((k + 1) * dt, psi * np.exp(-1j * phase))
    psi = psi * np.exp(-1j * phase)
    drift = abs(float(np.linalg.norm(psi)) - norm0)
    if drift > NORM_LIMIT:
        raise InstabilityError(f"norm drifted by {drift:.3g}")
    return psi, StepInfo(steps, dt, iters, phase, drift)


def energy_spread(H: Hamiltonian, c) -> float:
    """``sqrt(<H^2> - <H>^2)`` of the sector state ``c``."""
    c = np.asarray(c, dtype=np.complex128)
    hc = H.matvec(c)
    nn = np.vdot(c, c).real
    e = np.vdot(c, hc).real / nn
    return math.sqrt(max(np.vdot(hc, hc).real / nn - e * e, 0.0))


def safe_dt(dt: float, spread: float, limit: float = 0.05) -> float:
    """``dt``, reduced if needed so that ``dt * spread <= limit``."""
    return dt if spread * dt <= limit else limit / spread


def sweep_grid(cfg: TrapConfig, schedule: Schedule, spacing: float = DYNAMICS_SPACING) -> Grid:
    return Grid.for_trap(cfg, d_max=max(schedule.d_start, schedule.d_end), spacing=spacing)


@dataclass
class Trajectory:
    """Sampled observables along a sweep."""

    t: list = field(default_factory=list)
    d: list = field(default_factory=list)
    norm: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "d", "norm", "left", "right"])
        for row in zip(self.t, self.d, self.norm, self.left, self.right):
            w.writerow([f"{v:.17g}" for v in row])
        return _emit(buf.getvalue(), path)


def _emit(text, path):
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


@dataclass
class Propagation:
    state: WaveFunction
    info: StepInfo
    trajectory: Trajectory | None
    elapsed: float


def _as_sector(psi, grid, n):
    if isinstance(psi, WaveFunction):
        if psi.grid != grid or psi.n_particles != n:
            raise GridMismatchError("initial state does not live on the sweep grid")
        return psi.sector()
    return np.asarray(psi, dtype=np.complex128)


def propagate(
    psi,
    cfg: TrapConfig,
    schedule: Schedule | None,
    dt: float = DEFAULT_DT,
    grid: Grid | None = None,
    record_every: int | None = None,
    cfg_at=None,
    duration: float | None = None,
) -> Propagation:
    """Evolve ``psi`` while the separation follows ``schedule``.

    Only the diagonal (trap) part of the Hamiltonian changes in time.
    Passing ``schedule=None`` with ``cfg_at(t)`` and ``duration`` follows an
    arbitrary path instead (serial splitting); ``cfg`` is then the widest
    configuration of the path, used to validate the grid.
    """
    if grid is None:
        grid = psi.grid if isinstance(psi, WaveFunction) else sweep_grid(cfg, schedule)
    if schedule is None:
        if cfg_at is None or duration is None:
            raise ValueError("a path needs cfg_at and duration")
        H = Hamiltonian(grid, cfg)
    else:
        H = Hamiltonian(grid, cfg.with_d(max(schedule.d_start, schedule.d_end)))
    x = grid.x
    if schedule is not None:
        def cfg_at(t):
            return cfg.with_d(float(schedule.d_at(t)))
        duration = schedule.duration
    c0 = _as_sector(psi, grid, H.n_particles)

    def diag_at(t):
        return H.diagonal_for(stage_potential(cfg_at(t), x))

    traj = None
    observer = None
    if record_every:
        traj = Trajectory()
        left_mask = H.basis.all_in(x < -0.5 * grid.spacing)
        right_mask = H.basis.all_in(x > 0.5 * grid.spacing)
        counter = [0]

        def observer(t, c):
            if counter[0] % record_every == 0:
                p = np.abs(c) ** 2
                traj.t.append(t)
                traj.d.append(cfg_at(t).d)
                traj.norm.append(float(math.sqrt(p.sum())))
                traj.left.append(float(p[left_mask].sum()))
                traj.right.append(float(p[right_mask].sum()))
            counter[0] += 1

    start = time.perf_counter()
    c, info = crank_nicolson(c0, H.hopping, diag_at, duration, dt, observer=observer)
    elapsed = time.perf_counter() - start
    log.debug("sweep %d steps, %.1f COCG its/step, %.2fs", info.steps, info.iterations / max(info.steps, 1), elapsed)
    return Propagation(WaveFunction.from_sector(grid, H.n_particles, c), info, traj, elapsed)


@dataclass
class SweepResult:
    """State after a sweep projected on the adiabatic states at the final separation."""

    state: WaveFunction
    projections: np.ndarray
    ground_probability: float
    elapsed: float
    final_levels: Eigenpairs
    info: StepInfo
    trajectory: Trajectory | None = None


def ground_state(cfg: TrapConfig, grid: Grid, k: int = 1) -> Eigenpairs:
    return eigensolve(Hamiltonian(grid, cfg), k)


def sweep_and_project(
    psi0,
    cfg: TrapConfig,
    schedule: Schedule,
    k: int = 8,
    dt: float = DEFAULT_DT,
    grid: Grid | None = None,
    record_every: int | None = None,
) -> SweepResult:
    """Propagate, then return ``|<phi_i(d_end)|psi>|^2`` for the ``k`` lowest levels.

    ``psi0`` may be a WaveFunction or sector coefficients; it is taken as
    normalised.  Passing ``None`` starts from the ground state at ``d_start``.
    """
    if grid is None:
        grid = psi0.grid if isinstance(psi0, WaveFunction) else sweep_grid(cfg, schedule)
    if psi0 is None:
        psi0 = ground_state(cfg.with_d(schedule.d_start), grid).vectors[:, 0]
    prop = propagate(psi0, cfg, schedule, dt, grid, record_every)
    final = eigensolve(Hamiltonian(grid, cfg.with_d(schedule.d_end)), k)
    c = prop.state.sector()
    proj = np.abs(final.vectors.T @ c) ** 2
    return SweepResult(prop.state, proj, float(proj[0]), prop.elapsed, final, prop.info, prop.trajectory)


@dataclass
class SwitchReport:
    """Overlap of an unchanged state with the spectrum after a parameter swap."""

    ground_overlap: float
    distribution: np.ndarray
    residual: float
    energy_before: float
    energy_after: float


def sudden_switch(psi: WaveFunction, cfg_before: TrapConfig, cfg_after: TrapConfig, k: int = 8) -> SwitchReport:
    """Report how an instantaneous change of trap/interaction projects ``psi``.

    The state is not modified.  ``distribution[i] = |<phi_i|psi>|^2`` over the
    ``k`` lowest levels of the new Hamiltonian; ``residual`` is the weight
    outside them.
    """
    grid = psi.grid
    c = psi.sector()
    c = c / np.linalg.norm(c)
    before = Hamiltonian(grid, cfg_before, validate=False)
    after = Hamiltonian(grid, cfg_after, validate=False)
    pairs = eigensolve(after, k)
    dist = np.abs(pairs.vectors.T @ c) ** 2
    return SwitchReport(
        float(dist[0]), dist, float(max(0.0, 1.0 - dist.sum())), before.expectation(c), after.expectation(c)
    )


@dataclass(frozen=True)
class CatParameters:
    """Amplitudes of the all-left / all-right components of a split state.

    ``visibility = 2 alpha beta / (alpha^2 + beta^2)`` is the coincidence
    fringe contrast.  ``degenerate`` marks the population-based fallback.
    """

    alpha: float
    beta: float
    theta: float
    visibility: float
    localization: float
    degenerate: bool = False

    @property
    def doublet_weight(self) -> float:
        return self.alpha**2 + self.beta**2


def localized_doublet(levels: Eigenpairs) -> tuple[np.ndarray, np.ndarray, float]:
    """Rotate the two lowest levels into states living left and right of ``x = 0``.

    Returns ``(psi_L, psi_R, localization)`` where ``localization`` is the
    smaller of the two all-left / all-right weights.
    """
    H = levels.hamiltonian
    left = H.basis.all_in(H.grid.x < 0)
    U = levels.vectors[:, :2]
    P = U.T @ (left[:, None] * U)
    w, R = np.linalg.eigh(P)
    loc = U @ R
    for j in range(2):
        if loc[:, j].sum() < 0:
            loc[:, j] *= -1
    psi_R, psi_L = loc[:, 0], loc[:, 1]
    return psi_L, psi_R, float(min(w[1], 1.0 - w[0]))


def extract_cat(state: WaveFunction, levels: Eigenpairs, min_localization: float = 0.9) -> CatParameters:
    """Cat amplitudes ``alpha, beta`` and relative phase ``theta = arg(c_R / c_L)``."""
    if state.grid != levels.hamiltonian.grid:
        raise GridMismatchError("state and levels live on different grids")
    c = state.sector()
    psi_L, psi_R, loc = localized_doublet(levels)
    if loc >= min_localization:
        cL, cR = np.vdot(psi_L, c), np.vdot(psi_R, c)
        degenerate = False
    else:
        # population split: all-left part against the mirror image of the all-right part
        basis = levels.hamiltonian.basis
        x = state.grid.x
        lmask, rmask = basis.all_in(x < 0), basis.all_in(x > 0)
        part_L, part_R = np.where(lmask, c, 0), np.where(rmask, c, 0)
        cL = np.linalg.norm(part_L)
        ov = np.vdot(part_L[basis.mirror()], part_R)
        cR = np.linalg.norm(part_R) * (ov / abs(ov) if abs(ov) > 0 else 1.0)
        degenerate = True
    a, b = float(abs(cL)), float(abs(cR))
    theta = float(np.angle(cR / cL)) if a > 0 and b > 0 else 0.0
    vis = 2 * a * b / (a * a + b * b) if a + b > 0 else 0.0
    return CatParameters(a, b, theta, vis, loc, degenerate)


@dataclass(frozen=True)
class ThetaRow:
    v: float
    theta: float
    visibility: float
    alpha: float
    beta: float
    projections: tuple


def _theta_job(args):
    cfg, v, d_start, d_end, k, dt, spacing = args
    sch = Schedule(d_start, d_end, v)
    grid = sweep_grid(cfg, sch, spacing)
    res = sweep_and_project(None, cfg, sch, k, dt, grid)
    cat = extract_cat(res.state, res.final_levels)
    return ThetaRow(v, cat.theta, cat.visibility, cat.alpha, cat.beta, tuple(float(p) for p in res.projections))


def _map(fn, jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def theta_vs_speed(
    cfg: TrapConfig,
    v_list,
    d_start: float = 0.0,
    d_end: float = 3.0,
    k: int = 8,
    dt: float = DEFAULT_DT,
    spacing: float = DYNAMICS_SPACING,
    workers: int | None = None,
) -> list[ThetaRow]:
    """Split the ground state at ``d_start`` at each speed and characterise the cat."""
    v_list = [float(v) for v in v_list]
    if not v_list or any(v <= 0 for v in v_list):
        raise ValueError("speeds must be positive")
    jobs = [(cfg, v, d_start, d_end, k, dt, spacing) for v in v_list]
    return _map(_theta_job, jobs, workers)


def sweep_csv(rows: list[ThetaRow], path=None) -> str:
    k = max(len(r.projections) for r in rows) if rows else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["v"] + [f"p{j}" for j in range(k)] + ["theta", "visibility"])
    for r in rows:
        w.writerow([f"{r.v:.17g}"] + [f"{p:.17g}" for p in r.projections] + [f"{r.theta:.17g}", f"{r.visibility:.17g}"])
    return _emit(buf.getvalue(), path)


@dataclass(frozen=True)
class BranchPhase:
    """Relative phase picked up by the right branch while both branches split."""

    delta_phase: float
    overlap: float
    retention_L: float
    retention_R: float


def branch_config(cfg: TrapConfig, branch: str, q_offset: float = 1e-4, origin: float = 0.0) -> TrapConfig:
    """Trap seen by one cat branch: the R set inherits the extra depth ``q_offset``."""
    if branch == "L":
        return cfg.replace(origin=origin)
    if branch == "R":
        return cfg.replace(q=tuple(q + q_offset for q in cfg.q), origin=origin)
    raise ValueError("branch must be 'L' or 'R'")


def _branch_job(args):
    cfg, schedule, dt, spacing, k = args
    grid = sweep_grid(cfg, schedule, spacing)
    res = sweep_and_project(None, cfg, schedule, k, dt, grid)
    return res.state.sector(), res.ground_probability


def branch_phase(
    cfg: TrapConfig,
    schedule: Schedule,
    q_offset: float = 1e-4,
    dt: float = DEFAULT_DT,
    spacing: float = DYNAMICS_SPACING,
    k: int = 2,
    workers: int | None = None,
) -> BranchPhase:
    """Phase of the R-set evolution relative to the L-set, ``arg <psi_L(T)|psi_R(T)>``.

    Each branch starts in the ground state of its own merged trap at
    ``d_start`` and is evolved independently.  Both runs use the same grid
    so the final states can be overlapped directly.
    """
    cfgs = [branch_config(cfg, "L"), branch_config(cfg, "R", q_offset)]
    jobs = [(c, schedule, dt, spacing, k) for c in cfgs]
    (cL, rL), (cR, rR) = _map(_branch_job, jobs, workers)
    ov = np.vdot(cL, cR)
    return BranchPhase(float(np.angle(ov)), float(abs(ov)), rL, rR)
