"""N-particle wavefunctions on a uniform 1D grid.

A :class:`WaveFunction` stores the full configuration-space amplitudes
``psi[i1, ..., iN]`` (``M**N`` complex numbers) normalised so that
``sum |psi|^2 h^N = 1``.  Bosonic states are also representable exactly in the
permutation-symmetric sector, indexed by sorted site tuples
``i1 <= i2 <= ... <= iN``; :class:`FockSector` converts between the two.  The
sector coefficient of a sorted tuple ``s`` is the amplitude on the normalised
symmetrised basis state, i.e. an occupation-number (Fock) amplitude on the
grid sites, so the sector is the bosonic subspace itself, not a truncation.
"""

from __future__ import annotations

import csv
import functools
import io
import itertools
import math
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class GridMismatchError(ValueError):
    pass


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform grid of ``points`` sites on ``[x_min, x_max]`` (both included).

    Wavefunctions vanish on the ghost sites just outside the interval
    (hard walls).
    """

    x_min: float
    x_max: float
    points: int

    def __post_init__(self):
        if self.points < 2:
            raise ValueError("grid needs at least two points")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.points)

    @classmethod
    def symmetric(cls, half_width: float, spacing: float) -> "Grid":
        """Grid on ``[-L, L]`` with ``L`` rounded up to a whole number of steps."""
        n = int(math.ceil(half_width / spacing - 1e-9))
        return cls(-n * spacing, n * spacing, 2 * n + 1)

    @classmethod
    def for_trap(cls, cfg, d_max: float | None = None, spacing: float = 0.1, margin: float | None = None) -> "Grid":
        """Box ``[-(R + margin), R + margin]`` with ``R`` the outermost well centre at ``d_max``."""
        d_max = cfg.d if d_max is None else d_max
        reach = float(np.max(np.abs(cfg.with_d(d_max).centers())))
        margin = 5.0 * cfg.sigma if margin is None else margin
        return cls.symmetric(reach + margin, spacing)

    def contains_wells(self, cfg, widths: float = 4.0) -> bool:
        c = cfg.centers()
        return bool(c.min() - widths * cfg.sigma >= self.x_min - 1e-12 and c.max() + widths * cfg.sigma <= self.x_max + 1e-12)

    def validate(self, cfg=None):
        if self.points < 8:
            raise ValueError("grid needs at least 8 points")
        if cfg is not None and not self.contains_wells(cfg):
            raise ValueError("grid must contain every well centre +- 4 sigma")


class FockSector:
    """Bosonic sector of ``N`` particles on ``M`` grid sites.

    Use :func:`fock_sector` to obtain cached instances.
    """

    def __init__(self, points: int, n_particles: int):
        self.points = points
        self.n_particles = n_particles
        conf = np.array(
            list(itertools.combinations_with_replacement(range(points), n_particles)), dtype=np.int64
        ).reshape(-1, n_particles)
        self.conf = conf
        self.dim = len(conf)
        self._keys = np.ravel_multi_index(conf.T, (points,) * n_particles) if n_particles else np.zeros(1, np.int64)
        pairs = np.zeros(self.dim)
        for a in range(n_particles):
            for b in range(a + 1, n_particles):
                pairs += conf[:, a] == conf[:, b]
        # distinct orderings of a sorted tuple: N! / prod(n_a!), where the
        # product of running multiplicities along the tuple equals prod(n_a!)
        denom = np.ones(self.dim)
        for p in range(n_particles):
            denom *= (conf[:, : p + 1] == conf[:, p : p + 1]).sum(axis=1)
        occ = math.factorial(n_particles) / denom
        self.n_perm = occ
        self.pair_coincidences = pairs
        self._hopping = {}

    def index_of(self, configs) -> np.ndarray:
        """Sector indices of sorted configurations (rows of ``configs``)."""
        configs = np.asarray(configs, dtype=np.int64)
        k = np.ravel_multi_index(configs.T, (self.points,) * self.n_particles)
        idx = np.searchsorted(self._keys, k)
        if np.any(idx >= self.dim) or np.any(self._keys[np.minimum(idx, self.dim - 1)] != k):
            raise KeyError("configuration not in sector")
        return idx

    def hopping(self, spacing: float) -> sp.csr_matrix:
        """Off-diagonal part of ``-sum_i d^2/dx_i^2`` (central differences) in this sector.

        The matrix element for moving one boson from site ``a`` to ``a +- 1`` is
        ``-sqrt(n_a (n_b + 1)) / h^2``.
        """
        key = float(spacing)
        if key in self._hopping:
            return self._hopping[key]
        conf, M, N = self.conf, self.points, self.n_particles
        rows, cols, vals = [], [], []
        for p in range(N):
            for step in (1, -1):
                moved = conf.copy()
                moved[:, p] += step
                ok = (moved[:, p] >= 0) & (moved[:, p] < M)
                # move only one representative of a group of equal sites
                if step == 1 and p < N - 1:
                    ok &= conf[:, p] != conf[:, p + 1]
                if step == -1 and p > 0:
                    ok &= conf[:, p] != conf[:, p - 1]
                src = conf[ok]
                target = self.index_of(np.sort(moved[ok], axis=1))
                a = src[:, p]
                n_a = (src == a[:, None]).sum(axis=1)
                n_b = (src == (a + step)[:, None]).sum(axis=1)
                rows.append(np.flatnonzero(ok))
                cols.append(target)
                vals.append(-np.sqrt(n_a * (n_b + 1.0)) / spacing**2)
        K = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.dim, self.dim)
        )
        K.sort_indices()
        K.indices = K.indices.astype(np.int64)
        K.indptr = K.indptr.astype(np.int64)
        self._hopping[key] = K
        return K

    def kinetic_diagonal(self, spacing: float) -> float:
        return 2.0 * self.n_particles / spacing**2

    def onebody_sum(self, values) -> np.ndarray:
        """``sum_p values[conf[:, p]]`` for a one-body diagonal ``values`` on the grid."""
        return np.asarray(values)[self.conf].sum(axis=1)

    def expand(self, coeffs, spacing: float) -> np.ndarray:
        """Full ``(M,)*N`` amplitude array of the sector vector ``coeffs``."""
        N, M = self.n_particles, self.points
        coeffs = np.asarray(coeffs)
        full = np.zeros(M**N, dtype=np.result_type(coeffs.dtype, np.complex128))
        vals = coeffs / np.sqrt(self.n_perm * spacing**N)
        for perm in itertools.permutations(range(N)):
            full[np.ravel_multi_index(self.conf[:, perm].T, (M,) * N)] = vals
        return full.reshape((M,) * N)

    def compress(self, full, spacing: float) -> np.ndarray:
        """Project a full amplitude array onto the sector (symmetric part only)."""
        N, M = self.n_particles, self.points
        flat = np.asarray(full).reshape(-1)
        acc = np.zeros(self.dim, dtype=np.complex128)
        for perm in itertools.permutations(range(N)):
            acc += flat[np.ravel_multi_index(self.conf[:, perm].T, (M,) * N)]
        return acc * np.sqrt(self.n_perm * spacing**N) / math.factorial(N)

    def mirror(self) -> np.ndarray:
        """Index permutation of the reflection ``site i -> M - 1 - i``."""
        flipped = np.sort(self.points - 1 - self.conf, axis=1)
        return self.index_of(flipped)

    def all_in(self, mask) -> np.ndarray:
        """Boolean over sector states: every particle on a site where ``mask`` is true."""
        return np.asarray(mask, dtype=bool)[self.conf].all(axis=1)


@functools.lru_cache(maxsize=16)
def fock_sector(points: int, n_particles: int) -> FockSector:
    return FockSector(points, n_particles)


@dataclass
class WaveFunction:
    """Complex amplitudes on the ``N``-fold product grid.

    ``symmetry`` is ``"bosonic"`` once the state is known to be exchange
    symmetric and ``"unchecked"`` otherwise.
    """

    grid: Grid
    n_particles: int
    amplitudes: np.ndarray
    symmetry: str = "unchecked"
    _sector: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        shape = (self.grid.points,) * self.n_particles
        if self.amplitudes.shape != shape:
            raise ValueError(f"amplitudes must have shape {shape}, got {self.amplitudes.shape}")

    @classmethod
    def from_sector(cls, grid: Grid, n_particles: int, coeffs) -> "WaveFunction":
        basis = fock_sector(grid.points, n_particles)
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        wf = cls(grid, n_particles, basis.expand(coeffs, grid.spacing), "bosonic")
        wf._sector = coeffs.copy()
        return wf

    def sector(self) -> np.ndarray:
        """Coefficients in the bosonic sector (projecting if not symmetric)."""
        if self._sector is None:
            self._sector = fock_sector(self.grid.points, self.n_particles).compress(self.amplitudes, self.grid.spacing)
        return self._sector

    @property
    def volume_element(self) -> float:
        return self.grid.spacing**self.n_particles

    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.amplitudes) ** 2)) * self.volume_element)

    def normalized(self) -> "WaveFunction":
        n = self.norm()
        if n == 0:
            raise DegenerateInputError("cannot normalise a zero state")
        return WaveFunction(self.grid, self.n_particles, self.amplitudes / n, self.symmetry)

    def swap_deviation(self) -> float:
        """Largest amplitude change under any pairwise coordinate swap."""
        worst = 0.0
        a = self.amplitudes
        for i, j in itertools.combinations(range(self.n_particles), 2):
            worst = max(worst, float(np.max(np.abs(a - np.swapaxes(a, i, j)))) if a.size else 0.0)
        return worst * math.sqrt(self.volume_element)

    def density(self) -> np.ndarray:
        """Single-particle density ``rho(x)`` normalised to ``N``."""
        p = np.abs(self.amplitudes) ** 2 * self.volume_element
        out = np.zeros(self.grid.points)
        for axis in range(self.n_particles):
            others = tuple(k for k in range(self.n_particles) if k != axis)
            out += p.sum(axis=others) if others else p
        return out / self.grid.spacing

    def density_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "rho"])
        for xi, r in zip(self.grid.x, self.density()):
            w.writerow([f"{xi:.17g}", f"{r:.17g}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def dump(self, path):
        """Binary dump: little-endian header ``(M: int64, N: int64, x_min: f64, h: f64)``
        followed by interleaved real/imag float64 pairs in row-major order."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<qqdd", self.grid.points, self.n_particles, self.grid.x_min, self.grid.spacing))
            fh.write(np.ascontiguousarray(self.amplitudes, dtype="<c16").tobytes())

    @classmethod
    def load(cls, path) -> "WaveFunction":
        with open(path, "rb") as fh:
            M, N, x_min, h = struct.unpack("<qqdd", fh.read(32))
            data = np.frombuffer(fh.read(), dtype="<c16")
        grid = Grid(x_min, x_min + (M - 1) * h, int(M))
        return cls(grid, int(N), data.reshape((M,) * N).astype(np.complex128))


def _check_same(a: WaveFunction, b: WaveFunction):
    if a.n_particles != b.n_particles or a.grid != b.grid:
        raise GridMismatchError("wavefunctions live on different grids or particle numbers")


def symmetrize(psi: WaveFunction, renormalize: bool = True) -> WaveFunction:
    """Project onto the exchange-symmetric subspace (average over all ``N!`` permutations)."""
    N = psi.n_particles
    acc = np.zeros_like(psi.amplitudes)
    for perm in itertools.permutations(range(N)):
        acc += np.transpose(psi.amplitudes, perm)
    acc /= math.factorial(N)
    out = WaveFunction(psi.grid, N, acc, "bosonic")
    n = out.norm()
    if n < 1e-12 * max(psi.norm(), 1e-300):
        raise DegenerateInputError("state has no exchange-symmetric component")
    if renormalize:
        out.amplitudes /= n
    return out


def product_state(orbitals, grid: Grid, n_particles: int | None = None) -> WaveFunction:
    """Symmetrised product ``w_1 (x) w_2 (x) ... (x) w_N`` of one-particle orbitals.

    Orbitals are sampled on ``grid`` and normalised with ``sum |w|^2 h = 1``.
    """
    orbitals = [np.asarray(o, dtype=np.complex128) for o in orbitals]
    if n_particles is not None and len(orbitals) != n_particles:
        raise ValueError(f"expected {n_particles} orbitals, got {len(orbitals)}")
    amp = orbitals[0]
    for o in orbitals[1:]:
        amp = np.multiply.outer(amp, o)
    raw = WaveFunction(grid, len(orbitals), amp)
    return symmetrize(raw)


def overlap(a: WaveFunction, b: WaveFunction) -> complex:
    """Discrete inner product ``<a|b>``."""
    _check_same(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.volume_element)


def region_population(psi: WaveFunction, region) -> tuple[float, float]:
    """Probability that all particles lie in ``region`` and the one-particle marginal.

    Returns ``(all_in, marginal)`` where ``marginal`` is the probability of
    finding a given particle in the region (density integral divided by ``N``).
    """
    lo, hi = region
    mask = (psi.grid.x >= lo) & (psi.grid.x <= hi)
    idx = np.flatnonzero(mask)
    sub = psi.amplitudes[np.ix_(*([idx] * psi.n_particles))]
    all_in = float(np.sum(np.abs(sub) ** 2) * psi.volume_element)
    marginal = float(np.sum(psi.density()[mask]) * psi.grid.spacing / psi.n_particles)
    return all_in, marginal


@dataclass(frozen=True)
class Observables:
    left_population: float
    right_population: float
    mixed_population: float
    well_populations: tuple


def observables(psi: WaveFunction, centers=None) -> Observables:
    """All-left / all-right weights (split at ``x = 0``) and per-well marginals.

    Per-well populations assign each grid point to the nearest well centre.
    """
    x = psi.grid.x
    h = psi.grid.spacing
    left, _ = region_population(psi, (x[0], -0.5 * h))
    right, _ = region_population(psi, (0.5 * h, x[-1]))
    wells = ()
    if centers is not None:
        centers = np.asarray(centers)
        owner = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
        rho = psi.density() * h / psi.n_particles
        wells = tuple(float(rho[owner == k].sum()) for k in range(len(centers)))
    return Observables(left, right, 1.0 - left - right, wells)


def boundary_density(psi: WaveFunction) -> float:
    """Largest one-particle density at the two edge sites, relative to its peak."""
    rho = psi.density()
    return float(max(rho[0], rho[-1]) / rho.max())
