"""One CP-ALS sweep over the projected slices ``{Y_k}``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dense import gram, nnls_rowwise, pinv_small
from .irregular import DenseSliceCollection
from .mttkrp import mttkrp_mode1, mttkrp_mode2, mttkrp_mode3


@dataclass
class CpFactors:
    """Factors of ``Y_k ~ H diag(W[k]) V^T``; ``lam`` holds extracted W column norms."""

    H: np.ndarray
    V: np.ndarray
    W: np.ndarray
    lam: np.ndarray = field(default=None)

    def __post_init__(self):
        self.H = np.array(self.H, dtype=np.float64)
        self.V = np.array(self.V, dtype=np.float64)
        self.W = np.array(self.W, dtype=np.float64)
        if self.lam is None:
            self.lam = np.ones(self.H.shape[1])

    @property
    def rank(self) -> int:
        return self.H.shape[1]


def normalize_columns(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale columns to unit 2-norm; all-zero columns stay zero with norm 0."""
    norms = np.linalg.norm(A, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return A / safe, norms


def cp_als_iteration(
    Y: DenseSliceCollection,
    factors: CpFactors,
    nonneg: bool = True,
    threads: int = 1,
    normalize_w: bool = False,
) -> CpFactors:
    """Update H, then V, then W, each by an exact least-squares solve.

    Column norms of H and V are pushed into W after their updates, so the
    model is unchanged by normalization and every sub-step can only lower
    the objective. With ``nonneg`` the V and W solves are non-negative
    least squares; H is never constrained.
    """
    H, V, W = factors.H, factors.V, factors.W

    M1 = mttkrp_mode1(Y, V, W, threads)
    H = M1 @ pinv_small(gram(W) * gram(V))
    H, scale = normalize_columns(H)
    W = W * scale

    M2 = mttkrp_mode2(Y, H, W, threads)
    G = gram(W) * gram(H)
    V = nnls_rowwise(G, M2) if nonneg else M2 @ pinv_small(G)
    V, scale = normalize_columns(V)
    W = W * scale

    M3 = mttkrp_mode3(Y, H, V, threads)
    G = gram(V) * gram(H)
    W = nnls_rowwise(G, M3) if nonneg else M3 @ pinv_small(G)

    if normalize_w:
        W, lam = normalize_columns(W)
    else:
        lam = np.ones(W.shape[1])
    return CpFactors(H, V, W, lam)


def cp_objective(Y: DenseSliceCollection, factors: CpFactors) -> float:
    """``sum_k ||Y_k - H diag(lam * W[k]) V^T||_F^2`` by dense evaluation (small inputs)."""
    H, V, W = factors.H, factors.V, factors.W * factors.lam
    return float(sum(np.sum((Y.dense(k) - (H * W[k]) @ V.T) ** 2) for k in range(Y.n_slices)))
