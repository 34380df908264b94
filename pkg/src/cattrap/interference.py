"""Stage-four readout: every atom's L/R pair meets on a 50-50 beamsplitter.

Atom ``i`` in the cat ``alpha |L..L> + beta e^{i theta} |R..R>`` carries an
extra phase ``phi_i`` on its R branch.  Its two modes are mixed by a 2x2
unitary ``U_i`` (rows: output channels A, B; columns: inputs L, R).  An atom
detected in A scores +1, in B scores -1.  The default splitter

    U = [[1, e^{i chi}], [1, -e^{i chi}]] / sqrt(2),   chi = pi / N

makes the product expectation ``-V cos(Delta + theta)`` for every ``N``, with
``Delta = sum_i phi_i`` and ``V = 2 alpha beta / (alpha^2 + beta^2)``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass

import numpy as np


def default_splitter(n_atoms: int, chi: float | None = None) -> np.ndarray:
    chi = math.pi / n_atoms if chi is None else chi
    return np.array([[1.0, np.exp(1j * chi)], [1.0, -np.exp(1j * chi)]]) / math.sqrt(2.0)


@dataclass(frozen=True)
class MeasurementModel:
    """Cat amplitudes, phases and one beamsplitter per atom."""

    n_atoms: int
    alpha: float
    beta: float
    theta: float = 0.0
    delta: float = 0.0
    splitters: tuple | None = None

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("need at least one atom")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        w = self.alpha**2 + self.beta**2
        if w > 1 + 1e-6:
            raise ValueError(f"alpha^2 + beta^2 = {w:.8g} exceeds 1")
        if w == 0:
            raise ValueError("alpha and beta cannot both vanish")
        if self.splitters is None:
            U = default_splitter(self.n_atoms)
            object.__setattr__(self, "splitters", tuple(U for _ in range(self.n_atoms)))
        else:
            us = tuple(np.asarray(u, dtype=np.complex128) for u in self.splitters)
            if len(us) != self.n_atoms:
                raise ValueError("need one splitter per atom")
            for u in us:
                if u.shape != (2, 2) or np.max(np.abs(u.conj().T @ u - np.eye(2))) > 1e-12:
                    raise ValueError("splitters must be 2x2 unitaries")
            object.__setattr__(self, "splitters", us)

    @classmethod
    def from_visibility(cls, n_atoms: int, visibility: float, theta: float = 0.0, delta: float = 0.0) -> "MeasurementModel":
        """Normalised amplitudes with ``2 alpha beta = visibility``."""
        if not 0 <= visibility <= 1:
            raise ValueError("visibility must lie in [0, 1]")
        s = math.sqrt(1 - visibility**2)
        return cls(n_atoms, math.sqrt((1 + s) / 2), math.sqrt((1 - s) / 2), theta, delta)

    @classmethod
    def with_phases(cls, n_atoms, alpha, beta, theta, phases) -> "MeasurementModel":
        phases = list(phases)
        if len(phases) != n_atoms:
            raise ValueError("need one phase per atom")
        return cls(n_atoms, alpha, beta, theta, float(sum(phases)))

    @property
    def visibility(self) -> float:
        return 2 * self.alpha * self.beta / (self.alpha**2 + self.beta**2)


def _outcomes(n):
    # row j: channel index per atom (0 = A, 1 = B), atom 0 most significant
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64).reshape(-1, n)


def outcome_distribution(model: MeasurementModel) -> tuple[np.ndarray, np.ndarray]:
    """All ``2^N`` channel strings and their probabilities."""
    n = model.n_atoms
    norm = math.sqrt(model.alpha**2 + model.beta**2)
    a, b = model.alpha / norm, model.beta / norm
    strings = _outcomes(n)
    U = np.stack(model.splitters)  # (n, out, in)
    atoms = np.arange(n)
    from_L = np.prod(U[atoms, strings, 0], axis=1)
    from_R = np.prod(U[atoms, strings, 1], axis=1)
    amp = a * from_L + b * np.exp(1j * (model.theta + model.delta)) * from_R
    return strings, np.abs(amp) ** 2


def outcome_values(strings: np.ndarray) -> np.ndarray:
    """+1 for channel A, -1 for channel B."""
    return 1 - 2 * strings


def coincidence_probability(model: MeasurementModel) -> float:
    """Probability that the product of all ``N`` outcomes is +1."""
    strings, p = outcome_distribution(model)
    prod = np.prod(outcome_values(strings), axis=1)
    return float(p[prod > 0].sum())


def anticoincidence_probability(model: MeasurementModel) -> float:
    strings, p = outcome_distribution(model)
    prod = np.prod(outcome_values(strings), axis=1)
    return float(p[prod < 0].sum())


def expectation_product(model: MeasurementModel) -> float:
    """Mean of the outcome product, ``P(+1) - P(-1)``."""
    strings, p = outcome_distribution(model)
    return float(np.dot(np.prod(outcome_values(strings), axis=1), p))


def closed_form_expectation(model: MeasurementModel) -> float:
    return -model.visibility * math.cos(model.delta + model.theta)


def marginal_distribution(model: MeasurementModel, subset) -> dict:
    """Exact joint distribution of the ±1 outcomes of ``subset`` (0-based atoms).

    Keys are tuples of ±1 in the order given by ``subset``.
    """
    subset = [int(i) for i in subset]
    if len(set(subset)) != len(subset) or any(not 0 <= i < model.n_atoms for i in subset):
        raise ValueError("subset must list distinct atom indices")
    if len(subset) >= model.n_atoms:
        raise ValueError("subset must be strictly smaller than the atom count; use coincidence_probability")
    strings, p = outcome_distribution(model)
    vals = outcome_values(strings)[:, subset]
    out = {}
    for key in itertools.product((1, -1), repeat=len(subset)):
        hit = np.all(vals == np.array(key, dtype=np.int64), axis=1) if subset else np.ones(len(p), bool)
        out[key] = float(p[hit].sum())
    return out


@dataclass
class SampleStats:
    records: np.ndarray  # (shots, N) of ±1
    products: np.ndarray
    mean: float
    stderr: float

    def to_csv(self, path=None) -> str:
        n = self.records.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["shot"] + [f"s{i + 1}" for i in range(n)] + ["product"])
        for j, (r, pr) in enumerate(zip(self.records, self.products)):
            w.writerow([j, *r.tolist(), int(pr)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def sample_outcomes(model: MeasurementModel, shots: int, seed: int = 0, batch: int = 10000) -> SampleStats:
    """Seeded draws from the exact outcome distribution.

    The seed is split into one independent stream per batch of ``batch``
    shots, so batches could be drawn concurrently without changing results.
    """
    if shots < 1:
        raise ValueError("shots must be at least 1")
    strings, p = outcome_distribution(model)
    p = p / p.sum()
    vals = outcome_values(strings)
    sizes = [batch] * (shots // batch) + ([shots % batch] if shots % batch else [])
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    picks = np.concatenate([np.random.default_rng(s).choice(len(p), size=m, p=p) for s, m in zip(streams, sizes)])
    records = vals[picks]
    prods = np.prod(records, axis=1)
    mean = float(prods.mean())
    stderr = float(prods.std(ddof=1) / math.sqrt(shots)) if shots > 1 else math.nan
    return SampleStats(records, prods, mean, stderr)


@dataclass(frozen=True)
class Fringe:
    delta: np.ndarray
    p_plus: np.ndarray
    expectation: np.ndarray

    @property
    def amplitude(self) -> float:
        """Amplitude of the first Fourier harmonic of ``expectation(delta)``."""
        n = len(self.delta)
        return float(2 * abs(np.sum(self.expectation * np.exp(-1j * self.delta))) / n)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "p_plus", "expectation"])
        for row in zip(self.delta, self.p_plus, self.expectation):
            w.writerow([f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def fringe_scan(model: MeasurementModel, points: int = 16) -> Fringe:
    """Exact ``P(+1)`` and product mean for ``points`` equally spaced ``Delta`` in ``[0, 2 pi)``."""
    if points < 3:
        raise ValueError("need at least three phase points")
    deltas = 2 * np.pi * np.arange(points) / points
    pp, ee = [], []
    for d in deltas:
        m = MeasurementModel(model.n_atoms, model.alpha, model.beta, model.theta, float(d), model.splitters)
        pp.append(coincidence_probability(m))
        ee.append(expectation_product(m))
    return Fringe(deltas, np.array(pp), np.array(ee))
