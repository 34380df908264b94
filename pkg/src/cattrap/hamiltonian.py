"""N-boson Hamiltonian on the grid: kinetic + trap + contact interaction.

In the scaled units the Hamiltonian reads

    H = sum_i [-d^2/dx_i^2 + V(x_i)] + U0 sum_{i<j} delta(x_i - x_j)

with second-order central differences, hard walls, and the contact term
regularised as ``U0 / h`` whenever two coordinates share a grid site.  The
same operator is available matrix-free on full configuration arrays
(:meth:`Hamiltonian.apply`) and as a sparse operator on the bosonic sector,
which is what the eigensolver and the propagator use.
"""

from __future__ import annotations

import copy
import csv
import io
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.optimize as so
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .potential import TrapConfig, stage_potential
from .qgrid import Grid, GridMismatchError, WaveFunction, fock_sector

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Iterative solver failed; ``residuals`` carries the last residual norms."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class Hamiltonian:
    """Hamiltonian of ``cfg.N`` bosons in the trap ``cfg`` on ``grid``."""

    def __init__(self, grid: Grid, cfg: TrapConfig, n_particles: int | None = None, validate: bool = True):
        if validate:
            grid.validate(cfg)
        self.grid = grid
        self.cfg = cfg
        self.n_particles = cfg.N if n_particles is None else n_particles
        self.basis = fock_sector(grid.points, self.n_particles)
        h = grid.spacing
        self.hopping = self.basis.hopping(h)
        self.base_diagonal = self.basis.kinetic_diagonal(h) + (cfg.U0 / h) * self.basis.pair_coincidences
        self.potential = stage_potential(cfg, grid.x)
        self.diagonal = np.empty(self.basis.dim)
        _kernels.sector_diagonal(self.basis.conf, self.base_diagonal, self.potential, self.diagonal)

    @property
    def dim(self) -> int:
        return self.basis.dim

    def at(self, d: float) -> "Hamiltonian":
        return self.with_config(self.cfg.with_d(d))

    def with_config(self, cfg: TrapConfig) -> "Hamiltonian":
        return Hamiltonian(self.grid, cfg, self.n_particles, validate=False)

    def with_potential(self, onebody) -> "Hamiltonian":
        """Same particles and interaction in an arbitrary one-body potential."""
        out = copy.copy(self)
        out.potential = np.asarray(onebody, dtype=float)
        out.diagonal = self.diagonal_for(out.potential)
        return out

    def diagonal_for(self, onebody) -> np.ndarray:
        out = np.empty(self.basis.dim)
        _kernels.sector_diagonal(self.basis.conf, self.base_diagonal, np.asarray(onebody, float), out)
        return out

    # -- sector representation ------------------------------------------------
    def matvec(self, c) -> np.ndarray:
        c = np.ascontiguousarray(c)
        out = np.empty_like(c, dtype=np.result_type(c.dtype, np.float64))
        K = self.hopping
        _kernels.matvec(K.indptr, K.indices, K.data, self.diagonal, c.astype(out.dtype, copy=False), out)
        return out

    def matmat(self, C) -> np.ndarray:
        C = np.ascontiguousarray(C, dtype=np.float64)
        out = np.empty_like(C)
        K = self.hopping
        _kernels.matmat(K.indptr, K.indices, K.data, self.diagonal, C, out)
        return out

    def linear_operator(self) -> spla.LinearOperator:
        def mm(V):
            V = np.asarray(V)
            if np.iscomplexobj(V):
                return self.matmat(V.real) + 1j * self.matmat(V.imag)
            return self.matmat(V)

        def mv(v):
            return self.matvec(np.asarray(v).ravel())

        return spla.LinearOperator((self.dim, self.dim), matvec=mv, matmat=mm, dtype=np.float64)

    def to_sparse(self) -> sp.csr_matrix:
        return (self.hopping + sp.diags(self.diagonal)).tocsr()

    def expectation(self, c) -> float:
        return float(np.vdot(c, self.matvec(c)).real / np.vdot(c, c).real)

    # -- full configuration space -------------------------------------------
    def apply(self, psi: WaveFunction) -> WaveFunction:
        """Matrix-free action on a full amplitude array (any exchange symmetry)."""
        if psi.grid != self.grid or psi.n_particles != self.n_particles:
            raise GridMismatchError("wavefunction does not match the Hamiltonian grid")
        a = psi.amplitudes
        N, M, h = self.n_particles, self.grid.points, self.grid.spacing
        out = (2.0 * N / h**2) * a
        for axis in range(N):
            lo = [slice(None)] * N
            hi = [slice(None)] * N
            lo[axis] = slice(0, M - 1)
            hi[axis] = slice(1, M)
            out[tuple(lo)] -= a[tuple(hi)] / h**2
            out[tuple(hi)] -= a[tuple(lo)] / h**2
            shape = [1] * N
            shape[axis] = M
            out += self.potential.reshape(shape) * a
        if self.cfg.U0 != 0:
            eye = np.eye(M)
            for i, j in itertools.combinations(range(N), 2):
                shape = [1] * N
                shape[i] = shape[j] = M
                mask = eye.reshape([M if k in (i, j) else 1 for k in range(N)])
                out += (self.cfg.U0 / h) * mask * a
        return WaveFunction(self.grid, N, out, psi.symmetry)


def _fix_sign(vecs):
    for j in range(vecs.shape[1]):
        v = vecs[:, j]
        s = v.sum()
        if abs(s) < 1e-8 * np.abs(v).sum():
            s = v[np.argmax(np.abs(v))]
        if s < 0:
            vecs[:, j] = -v
    return vecs


@dataclass
class Eigenpairs:
    """Lowest eigenpairs in the bosonic sector, energies ascending."""

    hamiltonian: Hamiltonian
    energies: np.ndarray
    vectors: np.ndarray  # (dim, k) sector coefficients, real, unit norm
    residuals: np.ndarray

    def state(self, i: int) -> WaveFunction:
        return WaveFunction.from_sector(self.hamiltonian.grid, self.hamiltonian.n_particles, self.vectors[:, i])


def eigensolve(
    H: Hamiltonian,
    k: int = 8,
    symmetry: str = "bosonic",
    v0=None,
    tol: float = 1e-11,
    maxiter: int | None = None,
    method: str = "auto",
    residual_limit: float = 1e-8,
) -> Eigenpairs:
    """``k`` lowest eigenpairs of ``H`` in the exchange-symmetric subspace.

    The Krylov path (implicitly restarted Lanczos) works on the sector
    operator, whose Krylov space never leaves the bosonic subspace.  Small
    problems (``method="auto"`` and dimension <= 200) are diagonalised
    densely.  Eigenvectors are signed so their coefficient sum is positive.

    Raises
    ------
    SolverError
        If Lanczos does not converge within ``maxiter`` or any residual
        ``||H psi - E psi||`` exceeds ``residual_limit``.
    """
    if symmetry != "bosonic":
        raise ValueError("only the bosonic sector is supported")
    if k < 1:
        raise ValueError("k must be at least 1")
    n = H.dim
    k = min(k, n)
    if method == "dense" or (method == "auto" and n <= 200) or k >= n - 1:
        w, V = sla.eigh(H.to_sparse().toarray())
        w, V = w[:k], V[:, :k]
    elif method in ("auto", "krylov"):
        if v0 is not None:
            v0 = np.asarray(v0, dtype=float)
            if v0.ndim == 2:
                v0 = v0.sum(axis=1)
        try:
            w, V = spla.eigsh(H.linear_operator(), k=k, which="SA", v0=v0, tol=tol, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"Lanczos did not converge ({len(exc.eigenvalues)} of {k} pairs)") from exc
        order = np.argsort(w)
        w, V = w[order], V[:, order]
    else:
        raise ValueError(f"unknown method {method!r}")
    V = _fix_sign(np.ascontiguousarray(V))
    res = np.linalg.norm(H.matmat(V) - V * w, axis=0)
    if np.any(res > residual_limit):
        raise SolverError(f"eigen residual {res.max():.3g} above {residual_limit:g}", res)
    return Eigenpairs(H, w, V, res)


@dataclass
class SpectrumCurve:
    """Adiabatic levels along a separation scan.

    ``energies[i]`` are the ascending levels at ``d[i]``; ``tracking[i, j]``
    is the index (into ``energies[i]``) of the level continuing curve ``j``
    and ``overlaps[i, j]`` its overlap with the curve's state at ``d[i-1]``.
    """

    d: np.ndarray
    energies: np.ndarray
    tracking: np.ndarray
    overlaps: np.ndarray
    ambiguous: list = field(default_factory=list)
    states: list | None = None

    @property
    def levels(self) -> int:
        return self.energies.shape[1]

    def tracked_energies(self) -> np.ndarray:
        return np.take_along_axis(self.energies, self.tracking, axis=1)

    def to_csv(self, path=None) -> str:
        gaps = np.diff(self.energies[:, :2], axis=1)[:, 0] if self.levels > 1 else np.full(len(self.d), np.nan)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d"] + [f"E{j}" for j in range(self.levels)] + ["min_gap"])
        for i, d in enumerate(self.d):
            w.writerow([f"{d:.17g}"] + [f"{e:.17g}" for e in self.energies[i]] + [f"{gaps[i]:.17g}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def scan_levels(cfg: TrapConfig, d_list, k: int = 8, grid: Grid | None = None, keep_states: bool = False, **eig_kw) -> SpectrumCurve:
    """Solve for the ``k`` lowest levels at each separation and track them by overlap.

    Each solve is warm-started from the previous ground state.  Consecutive
    eigenvector sets are matched by maximal total overlap; a row whose two
    best overlaps differ by less than ``1e-3`` is flagged and left in energy
    order.
    """
    d_list = np.asarray(d_list, dtype=float)
    if d_list.size > 1:
        steps = np.diff(d_list)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("d_list must be monotone")
    if grid is None:
        grid = Grid.for_trap(cfg, d_max=float(np.max(d_list)))
    base = Hamiltonian(grid, cfg.with_d(float(d_list.max())))
    energies = np.empty((len(d_list), k))
    tracking = np.empty((len(d_list), k), dtype=int)
    overlaps = np.ones((len(d_list), k))
    ambiguous = []
    states = [] if keep_states else None
    prev = None
    prev_track = np.arange(k)
    for i, d in enumerate(d_list):
        H = base.at(d)
        pairs = eigensolve(H, k, v0=None if prev is None else prev[:, 0], **eig_kw)
        kk = len(pairs.energies)
        energies[i, :kk] = pairs.energies
        if prev is None:
            tracking[i] = np.arange(k)
        else:
            ov = np.abs(prev.T @ pairs.vectors)
            rows, cols = so.linear_sum_assignment(-ov)
            perm = np.arange(kk)
            perm[rows] = cols
            for r in range(kk):
                top = np.sort(ov[r])[::-1]
                if kk > 1 and top[0] - top[1] < 1e-3:
                    ambiguous.append((i, r))
                    perm[r] = r
            if len(set(perm.tolist())) != kk:
                perm = np.arange(kk)
            # curve j sat on level prev_track[j] at the previous point
            tracking[i] = perm[prev_track]
            overlaps[i] = ov[prev_track, tracking[i]]
        prev_track = tracking[i]
        prev = pairs.vectors
        if keep_states:
            states.append(pairs)
        log.debug("d=%.4g E=%s", d, pairs.energies[:3])
    return SpectrumCurve(d_list, energies, tracking, overlaps, ambiguous, states)


@dataclass(frozen=True)
class GapProfile:
    values: np.ndarray
    minimum: float
    argmin_d: float


def gap(curve: SpectrumCurve, which: str = "ground-to-first") -> GapProfile:
    """Pointwise level spacing along the scan and its minimum."""
    lower = {"ground-to-first": 0, "first-to-second": 1}[which]
    if curve.levels < lower + 2:
        raise ValueError("curve has too few levels for this gap")
    vals = curve.energies[:, lower + 1] - curve.energies[:, lower]
    i = int(np.argmin(vals))
    return GapProfile(vals, float(vals[i]), float(curve.d[i]))


def one_particle_ground(grid: Grid, potential) -> tuple[float, np.ndarray]:
    """Ground state of ``-d^2/dx^2 + V`` on the grid (tridiagonal solve).

    Returns the energy and the orbital normalised with ``sum |w|^2 h = 1``.
    """
    h = grid.spacing
    diag = 2.0 / h**2 + np.asarray(potential, float)
    off = np.full(grid.points - 1, -1.0 / h**2)
    w, v = sla.eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    orb = v[:, 0] / np.sqrt(h)
    if orb.sum() < 0:
        orb = -orb
    return float(w[0]), orb
