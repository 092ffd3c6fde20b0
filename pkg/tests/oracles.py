"""Independent reference computations used only by the tests."""
import numpy as np


def dense_tensor(Y) -> np.ndarray:
    """R x J x K array from a DenseSliceCollection."""
    return np.stack([Y.dense(k) for k in range(Y.n_slices)], axis=2)


def einsum_mttkrp(T, H, V, W, mode):
    """Element-wise MTTKRP definition on a dense R x J x K tensor."""
    if mode == 1:
        return np.einsum("ajk,jr,kr->ar", T, V, W)
    if mode == 2:
        return np.einsum("ajk,ar,kr->jr", T, H, W)
    return np.einsum("ajk,ar,jr->kr", T, H, V)


def direct_residual_sq(X, Q, H, S, V) -> float:
    """sum_k ||X_k - Q_k H diag(S_k) V^T||_F^2 with dense reconstructions."""
    return float(sum(
        np.sum((X[k].to_dense() - Q[k] @ (H * S[k]) @ V.T) ** 2) for k in range(X.n_slices)
    ))


def procrustes_objective(Xk_dense, Q, H, s, V) -> float:
    return float(np.sum((Xk_dense - Q @ (H * s) @ V.T) ** 2))
