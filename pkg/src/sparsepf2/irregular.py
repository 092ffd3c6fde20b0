"""Storage for irregular tensors: K sparse slices sharing a column mode.

Slices are stored column-compressed over their *non-zero columns only*
(a doubly compressed layout). For slice ``k`` the arrays are

* ``cols``   -- ascending indices of the columns holding a non-zero (``c_k`` of them)
* ``colptr`` -- offsets into ``rows``/``vals`` for each of those columns
* ``rows``   -- row index of each stored value, ascending within a column
* ``vals``   -- the values

An :class:`IrregularTensor` concatenates the arrays of all slices so that
compiled kernels can sweep every subject without Python overhead. The
projected slices ``Y_k`` reuse the same ``slice_ptr``/``cols`` layout, one
packed length-R column per non-zero column of ``X_k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DataError, EmptySliceError

INDEX = np.int64


def _frozen(a, dtype) -> np.ndarray:
    # no copy when already contiguous with the right dtype; the view is locked
    out = np.ascontiguousarray(a, dtype=dtype).view()
    out.flags.writeable = False
    return out


def _compress_csc(csc: sp.csc_array):
    """Drop empty columns from a canonical CSC matrix."""
    counts = np.diff(csc.indptr)
    cols = np.flatnonzero(counts).astype(INDEX)
    colptr = np.zeros(len(cols) + 1, dtype=INDEX)
    np.cumsum(counts[cols], out=colptr[1:])
    return cols, colptr, csc.indices.astype(INDEX), csc.data.astype(np.float64)


@dataclass(frozen=True, eq=False)
class SparseSlice:
    """One subject's ``n_rows x n_cols`` sparse observation matrix."""

    n_rows: int
    n_cols: int
    cols: np.ndarray
    colptr: np.ndarray
    rows: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        for name, dtype in (("cols", INDEX), ("colptr", INDEX), ("rows", INDEX), ("vals", np.float64)):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype))
        object.__setattr__(self, "n_rows", int(self.n_rows))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        _check_slice_arrays(self.n_rows, self.n_cols, self.cols, self.colptr, self.rows, self.vals)

    @classmethod
    def from_coo(cls, rows, cols, vals, shape) -> "SparseSlice":
        """Build a slice from coordinate triplets.

        Duplicate ``(row, col)`` pairs are summed; entries that are exactly
        zero after summation are not stored.
        """
        n_rows, n_cols = (int(s) for s in shape)
        rows = np.asarray(rows, dtype=INDEX)
        cols = np.asarray(cols, dtype=INDEX)
        vals = np.asarray(vals, dtype=np.float64)
        if not (len(rows) == len(cols) == len(vals)):
            raise DataError("rows, cols and vals must have equal length")
        if len(rows) and (rows.min() < 0 or rows.max() >= n_rows):
            raise DataError("row index out of range")
        if len(cols) and (cols.min() < 0 or cols.max() >= n_cols):
            raise DataError("column index out of range")
        csc = sp.csc_array((vals, (rows, cols)), shape=(n_rows, n_cols))
        csc.sum_duplicates()
        csc.eliminate_zeros()
        csc.sort_indices()
        return cls(n_rows, n_cols, *_compress_csc(csc))

    @classmethod
    def from_dense(cls, a) -> "SparseSlice":
        a = np.asarray(a, dtype=np.float64)
        rows, cols = np.nonzero(a)
        return cls.from_coo(rows, cols, a[rows, cols], a.shape)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    @property
    def nnz(self) -> int:
        return len(self.vals)

    @property
    def nnz_cols(self) -> np.ndarray:
        return self.cols

    def col_indices(self) -> np.ndarray:
        """Column index of every stored value (expanded from ``colptr``)."""
        return np.repeat(self.cols, np.diff(self.colptr))

    def to_csc(self) -> sp.csc_array:
        return sp.csc_array((self.vals, (self.rows, self.col_indices())), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.rows, self.col_indices()] = self.vals
        return out


def _check_slice_arrays(n_rows, n_cols, cols, colptr, rows, vals):
    if n_rows < 0 or n_cols <= 0:
        raise DataError(f"invalid slice shape ({n_rows}, {n_cols})")
    if len(colptr) != len(cols) + 1 or colptr[0] != 0 or colptr[-1] != len(rows):
        raise DataError("colptr inconsistent with cols/rows")
    if len(rows) != len(vals):
        raise DataError("rows and vals differ in length")
    if len(cols):
        if cols[0] < 0 or cols[-1] >= n_cols or np.any(np.diff(cols) <= 0):
            raise DataError("column indices must be ascending, unique and in range")
        if np.any(np.diff(colptr) <= 0):
            raise DataError("stored columns must hold at least one entry")
    if len(rows):
        if rows.min() < 0 or rows.max() >= n_rows:
            raise DataError("row index out of range")
        # rows ascend within each column; a drop is allowed only at a column start
        drops = np.flatnonzero(np.diff(rows) <= 0) + 1
        if not np.isin(drops, colptr[1:-1]).all():
            raise DataError("duplicate or unsorted row indices within a column")


def nonzero_columns(slice_: SparseSlice) -> np.ndarray:
    """Ascending indices of the columns holding at least one non-zero."""
    return slice_.cols.copy()


def filter_zero_rows(slice_: SparseSlice) -> tuple[SparseSlice, np.ndarray]:
    """Remove all-zero rows.

    Returns the compacted slice and ``row_map`` with ``row_map[new] = old``.
    """
    if slice_.nnz == 0:
        raise EmptySliceError("empty slice")
    row_map = np.unique(slice_.rows)
    new_rows = np.searchsorted(row_map, slice_.rows)
    out = SparseSlice(len(row_map), slice_.n_cols, slice_.cols, slice_.colptr, new_rows, slice_.vals)
    return out, row_map


@dataclass(frozen=True, eq=False)
class IrregularTensor:
    """The collection ``{X_k}`` of K sparse slices with a shared column count J."""

    n_cols: int
    row_counts: np.ndarray
    slice_ptr: np.ndarray
    cols: np.ndarray
    colptr: np.ndarray
    rows: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        for name, dtype in (
            ("row_counts", INDEX), ("slice_ptr", INDEX), ("cols", INDEX),
            ("colptr", INDEX), ("rows", INDEX), ("vals", np.float64),
        ):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        if len(self.row_counts) < 1:
            raise DataError("an irregular tensor needs at least one slice")
        if len(self.slice_ptr) != len(self.row_counts) + 1 or self.slice_ptr[-1] != len(self.cols):
            raise DataError("slice_ptr inconsistent with cols")
        if len(self.colptr) != len(self.cols) + 1 or self.colptr[-1] != len(self.vals):
            raise DataError("colptr inconsistent with vals")

    @classmethod
    def from_slices(cls, slices: Sequence[SparseSlice]) -> "IrregularTensor":
        slices = list(slices)
        if not slices:
            raise DataError("an irregular tensor needs at least one slice")
        n_cols = slices[0].n_cols
        for k, s in enumerate(slices):
            if s.n_cols != n_cols:
                raise DataError(f"slice {k} has {s.n_cols} columns, expected {n_cols}")
        c = np.array([len(s.cols) for s in slices], dtype=INDEX)
        nnz = np.array([s.nnz for s in slices], dtype=INDEX)
        slice_ptr = np.concatenate([[0], np.cumsum(c)])
        entry_off = np.concatenate([[0], np.cumsum(nnz)])
        colptr = np.concatenate(
            [s.colptr[:-1] + off for s, off in zip(slices, entry_off[:-1])] + [[entry_off[-1]]]
        )
        return cls(
            n_cols=n_cols,
            row_counts=np.array([s.n_rows for s in slices], dtype=INDEX),
            slice_ptr=slice_ptr,
            cols=np.concatenate([s.cols for s in slices]),
            colptr=colptr,
            rows=np.concatenate([s.rows for s in slices]),
            vals=np.concatenate([s.vals for s in slices]),
        )

    @classmethod
    def from_dense(cls, mats) -> "IrregularTensor":
        return cls.from_slices([SparseSlice.from_dense(m) for m in mats])

    @property
    def n_slices(self) -> int:
        return len(self.row_counts)

    @property
    def total_nnz(self) -> int:
        return len(self.vals)

    @property
    def max_rows(self) -> int:
        return int(self.row_counts.max())

    @property
    def row_ptr(self) -> np.ndarray:
        """Offsets of each slice's rows in a row-stacked ``(sum I_k) x R`` array."""
        return np.concatenate([[0], np.cumsum(self.row_counts)]).astype(INDEX)

    @property
    def nnz_col_counts(self) -> np.ndarray:
        """``c_k`` for every slice."""
        return np.diff(self.slice_ptr)

    def slice_nnz(self) -> np.ndarray:
        return np.diff(self.colptr[self.slice_ptr])

    def __len__(self) -> int:
        return self.n_slices

    def __getitem__(self, k: int) -> SparseSlice:
        if not -self.n_slices <= k < self.n_slices:
            raise IndexError(f"slice {k} out of range for K={self.n_slices}")
        k %= self.n_slices
        c0, c1 = self.slice_ptr[k], self.slice_ptr[k + 1]
        e0, e1 = self.colptr[c0], self.colptr[c1]
        return SparseSlice(
            int(self.row_counts[k]), self.n_cols, self.cols[c0:c1],
            self.colptr[c0:c1 + 1] - e0, self.rows[e0:e1], self.vals[e0:e1],
        )

    def __iter__(self) -> Iterator[SparseSlice]:
        for k in range(self.n_slices):
            yield self[k]

    def stacked_csr(self) -> sp.csr_array:
        """All slices stacked vertically into one ``(sum I_k) x J`` matrix."""
        col_of_entry = np.repeat(self.cols, np.diff(self.colptr))
        slice_of_col = np.repeat(np.arange(self.n_slices), self.nnz_col_counts)
        slice_of_entry = np.repeat(slice_of_col, np.diff(self.colptr))
        global_rows = self.row_ptr[slice_of_entry] + self.rows
        return sp.csr_array(
            (self.vals, (global_rows, col_of_entry)), shape=(int(self.row_counts.sum()), self.n_cols)
        )


def frobenius_sq(tensor: IrregularTensor) -> float:
    """Sum of squared stored values, accumulated slice by slice."""
    total = 0.0
    for e0, e1 in zip(tensor.colptr[tensor.slice_ptr[:-1]], tensor.colptr[tensor.slice_ptr[1:]]):
        v = tensor.vals[e0:e1]
        total += float(np.dot(v, v))
    return total


@dataclass(frozen=True, eq=False)
class DenseSliceCollection:
    """Projected slices ``Y_k`` (each ``R x J``), packed by non-zero column.

    ``values[p]`` is column ``cols[p]`` of the slice ``k`` with
    ``slice_ptr[k] <= p < slice_ptr[k + 1]``; all other columns of ``Y_k``
    are zero.
    """

    n_rows: int
    n_cols: int
    slice_ptr: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "slice_ptr", _frozen(self.slice_ptr, INDEX))
        object.__setattr__(self, "cols", _frozen(self.cols, INDEX))
        object.__setattr__(self, "values", _frozen(self.values, np.float64))
        if self.values.shape != (len(self.cols), self.n_rows):
            raise DataError(
                f"packed values have shape {self.values.shape}, expected {(len(self.cols), self.n_rows)}"
            )
        if self.slice_ptr[-1] != len(self.cols):
            raise DataError("slice_ptr inconsistent with cols")

    @classmethod
    def from_dense(cls, mats) -> "DenseSliceCollection":
        """Pack dense ``R x J`` slices, keeping columns with any non-zero."""
        mats = [np.asarray(m, dtype=np.float64) for m in mats]
        if not mats:
            raise DataError("need at least one slice")
        n_rows, n_cols = mats[0].shape
        cols, vals = [], []
        for m in mats:
            if m.shape != (n_rows, n_cols):
                raise DataError("all dense slices must share one shape")
            nz = np.flatnonzero(np.any(m != 0, axis=0))
            cols.append(nz)
            vals.append(m[:, nz].T)
        slice_ptr = np.concatenate([[0], np.cumsum([len(c) for c in cols])])
        return cls(n_rows, n_cols, slice_ptr, np.concatenate(cols), np.concatenate(vals).reshape(-1, n_rows))

    @property
    def n_slices(self) -> int:
        return len(self.slice_ptr) - 1

    def nnz_cols(self, k: int) -> np.ndarray:
        return self.cols[self.slice_ptr[k]:self.slice_ptr[k + 1]]

    def packed(self, k: int) -> np.ndarray:
        """``R x c_k`` block of the non-zero columns of ``Y_k``."""
        return self.values[self.slice_ptr[k]:self.slice_ptr[k + 1]].T

    def dense(self, k: int) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        out[:, self.nnz_cols(k)] = self.packed(k)
        return out
