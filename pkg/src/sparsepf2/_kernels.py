"""Compiled loops over the packed slice layout.

Every kernel takes the flat arrays of an ``IrregularTensor`` or
``DenseSliceCollection`` directly. Reductions over subjects write into
one private accumulator per chunk of subjects; callers merge them.
"""
from contextlib import contextmanager

import numba
import numpy as np
from numba import njit, prange

# the bundled TBB is too old for numba; skip it instead of warning on every run
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@contextmanager
def using_threads(n: int):
    """Run compiled parallel loops with ``n`` threads (clamped to what numba has)."""
    prev = numba.get_num_threads()
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
    try:
        yield
    finally:
        numba.set_num_threads(prev)


@njit(parallel=True, cache=True)
def mode1_partials(yv, slice_ptr, cols, V, W, bounds, acc):
    R = yv.shape[1]
    for c in prange(len(bounds) - 1):
        tmp = np.empty((R, R))
        for k in range(bounds[c], bounds[c + 1]):
            tmp[:, :] = 0.0
            for p in range(slice_ptr[k], slice_ptr[k + 1]):
                j = cols[p]
                for a in range(R):
                    y = yv[p, a]
                    for b in range(R):
                        tmp[a, b] += y * V[j, b]
            for a in range(R):
                for b in range(R):
                    acc[c, a, b] += tmp[a, b] * W[k, b]


@njit(parallel=True, cache=True)
def mode2_partials(yv, slice_ptr, cols, H, W, bounds, acc):
    R = yv.shape[1]
    for c in prange(len(bounds) - 1):
        for k in range(bounds[c], bounds[c + 1]):
            for p in range(slice_ptr[k], slice_ptr[k + 1]):
                j = cols[p]
                for b in range(R):
                    s = 0.0
                    for a in range(R):
                        s += yv[p, a] * H[a, b]
                    acc[c, j, b] += s * W[k, b]


@njit(parallel=True, cache=True)
def mode3_rows(yv, slice_ptr, cols, H, V, bounds, out):
    R = yv.shape[1]
    for c in prange(len(bounds) - 1):
        tmp = np.empty((R, R))
        for k in range(bounds[c], bounds[c + 1]):
            tmp[:, :] = 0.0
            for p in range(slice_ptr[k], slice_ptr[k + 1]):
                j = cols[p]
                for a in range(R):
                    y = yv[p, a]
                    for b in range(R):
                        tmp[a, b] += y * V[j, b]
            for b in range(R):
                s = 0.0
                for a in range(R):
                    s += H[a, b] * tmp[a, b]
                out[k, b] = s


@njit(parallel=True, cache=True)
def project(slice_ptr, colptr, rows, vals, row_ptr, Q, out):
    """``out[p] = Q_k^T X_k[:, cols[p]]`` for every packed column ``p``."""
    R = Q.shape[1]
    for k in prange(len(slice_ptr) - 1):
        base = row_ptr[k]
        for p in range(slice_ptr[k], slice_ptr[k + 1]):
            for a in range(R):
                out[p, a] = 0.0
            for e in range(colptr[p], colptr[p + 1]):
                v = vals[e]
                i = base + rows[e]
                for a in range(R):
                    out[p, a] += v * Q[i, a]


@njit(parallel=True, cache=True)
def slices_times(slice_ptr, cols, colptr, rows, vals, row_ptr, V, out):
    """Row-stacked ``X_k V`` for all slices; ``out`` must start zeroed."""
    R = V.shape[1]
    for k in prange(len(slice_ptr) - 1):
        base = row_ptr[k]
        for p in range(slice_ptr[k], slice_ptr[k + 1]):
            j = cols[p]
            for e in range(colptr[p], colptr[p + 1]):
                v = vals[e]
                i = base + rows[e]
                for b in range(R):
                    out[i, b] += v * V[j, b]


@njit(cache=True)
def _solve_passive(G, b, passive, z):
    idx = np.flatnonzero(passive)
    z[:] = 0.0
    if len(idx) == 0:
        return
    A = np.empty((len(idx), len(idx)))
    rhs = np.empty(len(idx))
    for u in range(len(idx)):
        rhs[u] = b[idx[u]]
        for v in range(len(idx)):
            A[u, v] = G[idx[u], idx[v]]
    sol = np.linalg.lstsq(A, rhs)[0]
    for u in range(len(idx)):
        z[idx[u]] = sol[u]


@njit(cache=True)
def fnnls(G, b, tol, max_iter, x):
    """Fast active-set NNLS on normal equations: min x'Gx - 2b'x, x >= 0.

    Writes the solution into ``x`` and returns the number of iterations
    used, or -1 when ``max_iter`` is exceeded.
    """
    n = len(b)
    passive = np.zeros(n, dtype=np.bool_)
    blocked = np.zeros(n, dtype=np.bool_)
    z = np.zeros(n)
    x[:] = 0.0
    w = b.copy()
    it = 0
    while True:
        t = -1
        wmax = tol
        for i in range(n):
            if not passive[i] and not blocked[i] and w[i] > wmax:
                wmax = w[i]
                t = i
        if t < 0:
            break
        it += 1
        if it > max_iter:
            return -1
        passive[t] = True
        _solve_passive(G, b, passive, z)
        if z[t] <= 0.0:
            # candidate cannot enter at working precision
            passive[t] = False
            blocked[t] = True
            continue
        while True:
            alpha = np.inf
            q = -1
            for i in range(n):
                if passive[i] and z[i] <= 0.0:
                    a = x[i] / (x[i] - z[i])
                    if a < alpha:
                        alpha = a
                        q = i
            if q < 0:
                break
            it += 1
            if it > max_iter:
                return -1
            for i in range(n):
                x[i] += alpha * (z[i] - x[i])
            x[q] = 0.0
            for i in range(n):
                if passive[i] and x[i] <= 0.0:
                    passive[i] = False
                    x[i] = 0.0
            _solve_passive(G, b, passive, z)
        for i in range(n):
            x[i] = z[i]
        blocked[:] = False
        for i in range(n):
            s = b[i]
            for u in range(n):
                s -= G[i, u] * x[u]
            w[i] = s
    return it


@njit(parallel=True, cache=True)
def fnnls_rows(G, B, tol, max_iter, out, iters):
    for r in prange(B.shape[0]):
        x = np.zeros(B.shape[1])
        iters[r] = fnnls(G, B[r].copy(), tol, max_iter, x)
        out[r] = x
