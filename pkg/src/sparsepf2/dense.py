"""Small dense linear-algebra primitives used by the solver."""
from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import DataError, NumericalError

PINV_RTOL = 1e-12


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DataError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise NumericalError(f"{name} contains non-finite values")
    return a


def khatri_rao(A, B, out=None) -> np.ndarray:
    """Column-wise Kronecker product of ``A`` (K x R) and ``B`` (J x R).

    Row ``k*J + i`` of the result is ``A[k] * B[i]``. ``out`` may be any
    writable ``(K*J, R)`` float64 buffer, e.g. a memory map.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise DataError(f"column counts differ: {A.shape[1]} vs {B.shape[1]}")
    K, R = A.shape
    J = B.shape[0]
    if out is None:
        out = np.empty((K * J, R))
    elif out.shape != (K * J, R):
        raise DataError(f"out has shape {out.shape}, expected {(K * J, R)}")
    blocks = out.reshape(K, J, R)
    for k in range(K):
        np.multiply(B, A[k], out=blocks[k])
    return out


def hadamard(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise DataError(f"shape mismatch: {A.shape} vs {B.shape}")
    return A * B


def gram(A) -> np.ndarray:
    """``A^T A``, symmetrised."""
    A = _as_matrix(A, "A")
    G = A.T @ A
    return 0.5 * (G + G.T)


def pinv_small(G) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a small symmetric PSD matrix.

    Eigenvalues at or below ``PINV_RTOL * max eigenvalue`` count as zero.
    """
    G = _as_matrix(G, "G")
    if G.shape[0] != G.shape[1]:
        raise DataError(f"pinv_small needs a square matrix, got {G.shape}")
    evals, evecs = np.linalg.eigh(0.5 * (G + G.T))
    top = evals.max(initial=0.0)
    keep = evals > PINV_RTOL * top
    if not keep.any():
        return np.zeros_like(G)
    E = evecs[:, keep]
    return (E / evals[keep]) @ E.T


def economy_svd(M) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``M = P diag(sigma) Z^T``.

    Returns ``P`` (m x rho), ``sigma`` (rho,) non-increasing and ``Z``
    (n x rho) with ``rho = min(m, n)``.
    """
    M = _as_matrix(M, "M")
    P, sigma, Zt = np.linalg.svd(M, full_matrices=False)
    return P, sigma, Zt.T


def nnls_rowwise(G, B, max_iter: int | None = None, tol: float | None = None) -> np.ndarray:
    """Solve ``min_x>=0  x G x^T - 2 x B[j]^T`` independently for each row of ``B``.

    ``G`` is the (R x R) PSD normal-equation matrix shared by every row.
    Uses the fast active-set method of Bro and de Jong on the normal
    equations. The default tolerance follows that method:
    ``10 * eps * ||G||_1 * R``; the default iteration cap is ``30 * R``.
    """
    G = _as_matrix(G, "G")
    B = _as_matrix(B, "B")
    R = G.shape[0]
    if G.shape != (R, R) or B.shape[1] != R:
        raise DataError(f"incompatible shapes G={G.shape}, B={B.shape}")
    if max_iter is None:
        max_iter = 30 * R
    if tol is None:
        tol = 10 * np.finfo(float).eps * np.abs(G).sum(axis=0).max(initial=0.0) * R
    out = np.zeros_like(B)
    iters = np.zeros(B.shape[0], dtype=np.int64)
    _kernels.fnnls_rows(np.ascontiguousarray(G), np.ascontiguousarray(B), float(tol), int(max_iter), out, iters)
    if (iters < 0).any():
        bad = int(np.flatnonzero(iters < 0)[0])
        raise NumericalError(f"NNLS did not converge (row {bad}, cap {max_iter} iterations)")
    return out
