"""MTTKRP kernels for the projected slice collection ``{Y_k}``.

The intermediate tensor ``Y`` is ``R x J x K`` with frontal slices
``Y_k = Q_k^T X_k``. Its three matricized-tensor-times-Khatri-Rao products
are computed slice by slice without forming any Khatri-Rao product:

* mode 1: ``M1 = sum_k (Y_k V) * W[k]``, the Hadamard product applied to
  every row of the R x R partial result;
* mode 2: row ``j`` of the k-th partial is ``(Y_k[:, j]^T H) * W[k]`` for
  each non-zero column ``j`` of ``Y_k``;
* mode 3: ``M3[k] = colwise_dot(H, Y_k V)``.

Products with ``V`` only read the rows of ``V`` listed in the non-zero
columns of ``Y_k``. Subjects are split into a fixed number of chunks of
roughly equal work; each chunk reduces into a private accumulator and the
accumulators are merged by a pairwise tree. The chunking does not depend
on the thread count, so results are bit-identical for any ``threads``.

:func:`naive_mttkrp` is the reference path: it materializes the sparse
matricization and the full Khatri-Rao product and multiplies them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .dense import khatri_rao
from .errors import DataError, NumericalError
from .irregular import DenseSliceCollection

MAX_CHUNKS = 64
ACC_BUDGET_BYTES = 256 * 2**20


@dataclass(frozen=True, eq=False)
class MttkrpInput:
    slices: DenseSliceCollection
    H: np.ndarray
    V: np.ndarray
    W: np.ndarray
    mode: int

    def __post_init__(self):
        for name in ("H", "V", "W"):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, a)
        _check_dims(self.slices, H=self.H, V=self.V, W=self.W)
        if self.mode not in (1, 2, 3):
            raise DataError(f"mode must be 1, 2 or 3, got {self.mode}")


def _check_dims(slices: DenseSliceCollection, H=None, V=None, W=None):
    R, J, K = slices.n_rows, slices.n_cols, slices.n_slices
    expected = {"H": (R, R), "V": (J, R), "W": (K, R)}
    for name, a in (("H", H), ("V", V), ("W", W)):
        if a is None:
            continue
        if a.shape != expected[name]:
            raise DataError(f"{name} has shape {a.shape}, expected {expected[name]}")
        if not np.isfinite(a).all():
            raise NumericalError(f"{name} contains non-finite values")


def chunk_bounds(slice_ptr: np.ndarray, n_chunks: int) -> np.ndarray:
    """Split subjects ``0..K`` into contiguous chunks of similar work.

    Work for subject ``k`` is taken as ``c_k + 1`` (non-zero columns plus a
    fixed per-subject overhead).
    """
    K = len(slice_ptr) - 1
    n_chunks = max(1, min(int(n_chunks), K))
    work = np.diff(slice_ptr) + 1
    cum = np.concatenate([[0], np.cumsum(work)])
    targets = cum[-1] * np.arange(1, n_chunks) / n_chunks
    inner = np.searchsorted(cum, targets, side="left")
    bounds = np.unique(np.concatenate([[0], inner, [K]]))
    return bounds.astype(np.int64)


def tree_sum(parts: np.ndarray) -> np.ndarray:
    """Pairwise-merge accumulators along axis 0 in a fixed order."""
    parts = list(parts)
    while len(parts) > 1:
        merged = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]


def _n_chunks(K: int, acc_bytes: int) -> int:
    return max(1, min(K, MAX_CHUNKS, ACC_BUDGET_BYTES // max(acc_bytes, 1)))


def _arrays(Y: DenseSliceCollection):
    return Y.values, Y.slice_ptr, Y.cols


def mttkrp_mode1(Y: DenseSliceCollection, V, W, threads: int = 1) -> np.ndarray:
    """``Y_(1) (W kr V)`` as an R x R matrix."""
    V = np.ascontiguousarray(V, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    _check_dims(Y, V=V, W=W)
    R = Y.n_rows
    bounds = chunk_bounds(Y.slice_ptr, _n_chunks(Y.n_slices, R * R * 8))
    acc = np.zeros((len(bounds) - 1, R, R))
    with _kernels.using_threads(threads):
        _kernels.mode1_partials(*_arrays(Y), V, W, bounds, acc)
    return tree_sum(acc)


def mttkrp_mode2(Y: DenseSliceCollection, H, W, threads: int = 1) -> np.ndarray:
    """``Y_(2) (W kr H)`` as a J x R matrix."""
    H = np.ascontiguousarray(H, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    _check_dims(Y, H=H, W=W)
    R, J = Y.n_rows, Y.n_cols
    bounds = chunk_bounds(Y.slice_ptr, _n_chunks(Y.n_slices, J * R * 8))
    acc = np.zeros((len(bounds) - 1, J, R))
    with _kernels.using_threads(threads):
        _kernels.mode2_partials(*_arrays(Y), H, W, bounds, acc)
    return tree_sum(acc)


def mttkrp_mode3(Y: DenseSliceCollection, H, V, threads: int = 1) -> np.ndarray:
    """``Y_(3) (V kr H)`` as a K x R matrix; rows are computed independently."""
    H = np.ascontiguousarray(H, dtype=np.float64)
    V = np.ascontiguousarray(V, dtype=np.float64)
    _check_dims(Y, H=H, V=V)
    bounds = chunk_bounds(Y.slice_ptr, _n_chunks(Y.n_slices, 0))
    out = np.empty((Y.n_slices, Y.n_rows))
    with _kernels.using_threads(threads):
        _kernels.mode3_rows(*_arrays(Y), H, V, bounds, out)
    return out


def mttkrp(inp: MttkrpInput, threads: int = 1) -> np.ndarray:
    if inp.mode == 1:
        return mttkrp_mode1(inp.slices, inp.V, inp.W, threads)
    if inp.mode == 2:
        return mttkrp_mode2(inp.slices, inp.H, inp.W, threads)
    return mttkrp_mode3(inp.slices, inp.H, inp.V, threads)


def matricize(Y: DenseSliceCollection, mode: int) -> sp.csc_array:
    """Mode-``n`` unfolding of the R x J x K tensor ``Y`` as a sparse matrix.

    Column orderings follow the usual convention (earlier modes vary
    fastest): mode 1 -> ``j + k*J``, mode 2 -> ``a + k*R``, mode 3 ->
    ``a + j*R``.
    """
    R, J, K = Y.n_rows, Y.n_cols, Y.n_slices
    total_c = len(Y.cols)
    slice_of = np.repeat(np.arange(K, dtype=np.int64), np.diff(Y.slice_ptr))
    if mode == 1:
        # packed order is already column order; each column holds R entries
        n_cols = K * J
        counts = np.zeros(n_cols + 1, dtype=np.int64)
        counts[1 + slice_of * J + Y.cols] = R
        indptr = np.cumsum(counts)
        indices = np.tile(np.arange(R, dtype=np.int64), total_c)
        return sp.csc_array((Y.values.ravel(), indices, indptr), shape=(R, n_cols))
    a = np.tile(np.arange(R, dtype=np.int64), total_c)
    j = np.repeat(Y.cols, R)
    k = np.repeat(slice_of, R)
    vals = Y.values.ravel()
    if mode == 2:
        coo = sp.coo_array((vals, (j, a + k * R)), shape=(J, R * K))
    elif mode == 3:
        coo = sp.coo_array((vals, (k, a + j * R)), shape=(K, R * J))
    else:
        raise DataError(f"mode must be 1, 2 or 3, got {mode}")
    return coo.tocsc()


def khatri_rao_shape(Y: DenseSliceCollection, mode: int) -> tuple[int, int]:
    R, J, K = Y.n_rows, Y.n_cols, Y.n_slices
    return {1: (K * J, R), 2: (K * R, R), 3: (J * R, R)}[mode]


def naive_mttkrp(inp: MttkrpInput, kr_out=None) -> np.ndarray:
    """Reference MTTKRP: sparse unfolding times the materialized Khatri-Rao product.

    ``kr_out`` optionally supplies the buffer (e.g. a disk-backed memory
    map) that receives the Khatri-Rao product.
    """
    Y, H, V, W = inp.slices, inp.H, inp.V, inp.W
    factors = {1: (W, V), 2: (W, H), 3: (V, H)}[inp.mode]
    kr = khatri_rao(*factors, out=kr_out)
    unfolded = matricize(Y, inp.mode)
    return np.asarray(unfolded @ kr)
