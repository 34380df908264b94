"""Brute-force references for the test-suite.

Nothing here imports the package's numerical code: matrices are assembled
from Kronecker products, the bosonic subspace is cut out with an explicit
permutation projector, and interference amplitudes come from a full
tensor-product state.  Size caps keep every call well under a second.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

MAX_DENSE = 4096


def gaussian_wells(x, centers, weights, V0, sigma):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for c, w in zip(centers, weights):
        out -= w * V0 * np.exp(-((x - c) ** 2) / (2 * sigma**2))
    return out


def one_body_matrix(potential, h):
    """Dense ``-d^2/dx^2 + V`` with hard walls."""
    M = len(potential)
    T = (2.0 * np.eye(M) - np.eye(M, k=1) - np.eye(M, k=-1)) / h**2
    return T + np.diag(potential)


def _embed(op, slot, n, M):
    mats = [np.eye(M)] * n
    mats[slot] = op
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def permutation_matrix(perm, n, M):
    """Matrix of ``(P psi)[i_0..i_{n-1}] = psi[i_perm(0)..i_perm(n-1)]``."""
    D = M**n
    P = np.zeros((D, D))
    for idx in itertools.product(range(M), repeat=n):
        src = tuple(idx[perm[k]] for k in range(n))
        P[np.ravel_multi_index(idx, (M,) * n), np.ravel_multi_index(src, (M,) * n)] = 1.0
    return P


@dataclass
class DenseProblem:
    matrix: np.ndarray
    energies: np.ndarray  # all eigenvalues, ascending
    bosonic_energies: np.ndarray
    bosonic_vectors: np.ndarray  # columns in the full M**n space


def dense_eigs(potential, h, n_particles, U0):
    """Every eigenpair of the ``n``-particle grid Hamiltonian, plus the bosonic ones."""
    M = len(potential)
    D = M**n_particles
    if D > MAX_DENSE:
        raise ValueError(f"dense oracle capped at {MAX_DENSE} rows, asked for {D}")
    h1 = one_body_matrix(np.asarray(potential, float), h)
    H = sum(_embed(h1, s, n_particles, M) for s in range(n_particles))
    grids = np.indices((M,) * n_particles).reshape(n_particles, -1)
    for a, b in itertools.combinations(range(n_particles), 2):
        H = H + np.diag((U0 / h) * (grids[a] == grids[b]).astype(float))
    if np.max(np.abs(H - H.T)) > 1e-13:
        raise AssertionError("dense Hamiltonian not symmetric")
    energies = np.linalg.eigvalsh(H)
    perms = list(itertools.permutations(range(n_particles)))
    S = sum(permutation_matrix(p, n_particles, M) for p in perms) / len(perms)
    w, V = np.linalg.eigh(S)
    B = V[:, w > 0.5]
    hb = B.T @ H @ B
    eb, vb = np.linalg.eigh(hb)
    return DenseProblem(H, energies, eb, B @ vb)


def lz_analytic(gap, rate):
    """Landau-Zener transition probability.

    Two-level model ``H(t) = [[r t / 2, Delta / 2], [Delta / 2, -r t / 2]]``
    (hbar = 1): diabatic energies cross with relative slope ``r``, the
    adiabatic gap at ``t = 0`` is ``Delta``.  Starting in the lower adiabatic
    state at ``t -> -inf``, the probability of ending in the upper one is
    ``exp(-2 pi (Delta / 2)^2 / r)``.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")
    return math.exp(-2.0 * math.pi * (gap / 2.0) ** 2 / rate)


def harmonic_ground(V0, sigma):
    """``-V0 + omega / 2`` for the quadratic expansion of a Gaussian well (mass 1/2 units)."""
    return -V0 + 0.5 * math.sqrt(2.0 * V0 / sigma**2)


def enumerate_interference(alpha, beta, theta, delta, n_atoms, chi=None):
    """Outcome-string probabilities from the full ``2^N``-mode tensor state.

    Mode ordering per atom is ``(L, R)`` in, ``(A, B)`` out.  The cat
    ``alpha |L..L> + beta e^{i(theta + delta)} |R..R>`` is written as a
    vector over ``2^N`` basis strings and hit with the Kronecker product of
    the per-atom splitters ``[[1, e^{i chi}], [1, -e^{i chi}]] / sqrt 2``.
    Returns ``{string of 'A'/'B': probability}``.
    """
    if n_atoms > 12:
        raise ValueError("enumeration capped at 12 atoms")
    chi = math.pi / n_atoms if chi is None else chi
    norm = math.hypot(alpha, beta)
    state = np.zeros(2**n_atoms, dtype=complex)
    state[0] = alpha / norm
    state[-1] = beta / norm * complex(math.cos(theta + delta), math.sin(theta + delta))
    u = np.array([[1.0, complex(math.cos(chi), math.sin(chi))], [1.0, -complex(math.cos(chi), math.sin(chi))]])
    u = u / math.sqrt(2.0)
    U = np.array([[1.0]])
    for _ in range(n_atoms):
        U = np.kron(U, u)
    out = U @ state
    probs = {}
    for j, label in enumerate(itertools.product("AB", repeat=n_atoms)):
        probs["".join(label)] = abs(out[j]) ** 2
    return probs


def product_plus_probability(probs):
    return sum(p for s, p in probs.items() if s.count("B") % 2 == 0)
