"""Compiled inner loops for the bosonic-sector Hamiltonian.

The sector Hamiltonian is ``H = K + diag(w)`` where ``K`` is a real symmetric
CSR hopping matrix and ``w`` a real diagonal.  All kernels take the CSR
triplet explicitly so they can be shared by every Hamiltonian built on the
same basis.
"""

import numba
import numpy as np


@numba.njit(cache=True, fastmath=True)
def matvec(indptr, indices, data, diag, v, out):
    for i in range(v.shape[0]):
        acc = diag[i] * v[i]
        for jj in range(indptr[i], indptr[i + 1]):
            acc += data[jj] * v[indices[jj]]
        out[i] = acc


@numba.njit(cache=True, fastmath=True)
def matmat(indptr, indices, data, diag, V, out):
    n, m = V.shape
    for i in range(n):
        for c in range(m):
            out[i, c] = diag[i] * V[i, c]
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            a = data[jj]
            for c in range(m):
                out[i, c] += a * V[j, c]


@numba.njit(cache=True, fastmath=True)
def sector_diagonal(conf, base, onebody, out):
    """``out[s] = base[s] + sum_p onebody[conf[s, p]]``."""
    n, npart = conf.shape
    for s in range(n):
        acc = base[s]
        for p in range(npart):
            acc += onebody[conf[s, p]]
        out[s] = acc


@numba.njit(cache=True, fastmath=True)
def _cayley_apply(indptr, indices, data, diag, tau, v, out):
    # out = (1 + i tau H) v
    for i in range(v.shape[0]):
        acc = diag[i] * v[i]
        for jj in range(indptr[i], indptr[i + 1]):
            acc += data[jj] * v[indices[jj]]
        out[i] = v[i] + 1j * tau * acc


@numba.njit(cache=True, fastmath=True)
def cn_rhs(indptr, indices, data, diag, tau, psi, out):
    """Return ``<psi|H|psi>`` and write ``(1 - i tau (H - <H>)) psi`` to ``out``."""
    n = psi.shape[0]
    e = 0.0
    for i in range(n):
        acc = diag[i] * psi[i]
        for jj in range(indptr[i], indptr[i + 1]):
            acc += data[jj] * psi[indices[jj]]
        out[i] = acc
        e += psi[i].real * acc.real + psi[i].imag * acc.imag
    for i in range(n):
        out[i] = psi[i] - 1j * tau * (out[i] - e * psi[i])
    return e


@numba.njit(cache=True, fastmath=True)
def cocg_solve(indptr, indices, data, diag, tau, b, x, tol, maxiter, r, w, p, q):
    """Solve ``(1 + i tau H) x = b`` in place by Jacobi-preconditioned COCG.

    The system matrix is complex symmetric (``H`` real symmetric), so the
    conjugate-orthogonal CG recurrence applies.  ``x`` holds the initial guess
    on entry.  Returns the iteration count, or ``-1`` if ``maxiter`` was hit.
    """
    n = b.shape[0]
    _cayley_apply(indptr, indices, data, diag, tau, x, q)
    rho = 0j
    bn = 0.0
    for i in range(n):
        r[i] = b[i] - q[i]
        w[i] = r[i] / (1.0 + 1j * tau * diag[i])
        p[i] = w[i]
        rho += r[i] * w[i]
        bn += b[i].real ** 2 + b[i].imag ** 2
    bn = np.sqrt(bn)
    if bn == 0.0:
        for i in range(n):
            x[i] = 0.0
        return 0
    rn = 0.0
    for i in range(n):
        rn += r[i].real ** 2 + r[i].imag ** 2
    if np.sqrt(rn) < tol * bn:
        return 0
    for it in range(maxiter):
        _cayley_apply(indptr, indices, data, diag, tau, p, q)
        pq = 0j
        for i in range(n):
            pq += p[i] * q[i]
        alpha = rho / pq
        rn = 0.0
        rho_new = 0j
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * q[i]
            rn += r[i].real ** 2 + r[i].imag ** 2
            w[i] = r[i] / (1.0 + 1j * tau * diag[i])
            rho_new += r[i] * w[i]
        if np.sqrt(rn) < tol * bn:
            return it + 1
        beta = rho_new / rho
        rho = rho_new
        for i in range(n):
            p[i] = w[i] + beta * p[i]
    return -1
