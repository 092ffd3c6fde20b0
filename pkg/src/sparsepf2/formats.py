"""Text formats: coordinate files for tensors, delimited text for factors.

Coordinate file::

    # comment lines start with '#'
    K J
    k i j v        (0-based subject, row within subject, column; float value)

Duplicate ``(k, i, j)`` entries are summed. Row counts are inferred as
``max i + 1`` per subject and all-zero rows are then filtered.

Factor directory::

    manifest.json   dimensions, row counts, file list, config
    V.txt  H.txt  S.txt  U/U_00000.txt ...

Factor matrices are written with 17 significant digits, which round-trips
64-bit floats exactly.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, EmptySliceError
from .irregular import IrregularTensor, SparseSlice, filter_zero_rows

log = logging.getLogger(__name__)

FACTOR_FORMAT = "sparsepf2-factors"
FACTOR_FMT = "%.17g"


def _fail(msg: str, lineno: int):
    raise DataError(f"{msg} at line {lineno}")


def parse_coordinate_file(path) -> IrregularTensor:
    path = Path(path)
    header = None
    ks, is_, js, vs = [], [], [], []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tok = line.split()
            if header is None:
                if len(tok) != 2:
                    _fail("malformed header (expected 'K J')", lineno)
                try:
                    K, J = int(tok[0]), int(tok[1])
                except ValueError:
                    _fail("malformed header (expected 'K J')", lineno)
                if K <= 0 or J <= 0:
                    _fail(f"K and J must be positive, got K={K} J={J}", lineno)
                header = (K, J)
                continue
            if len(tok) != 4:
                _fail("malformed line (expected 'k i j v')", lineno)
            try:
                k, i, j, v = int(tok[0]), int(tok[1]), int(tok[2]), float(tok[3])
            except ValueError:
                _fail("malformed line (expected 'k i j v')", lineno)
            if not 0 <= k < K:
                _fail("subject index out of range", lineno)
            if i < 0:
                _fail("row index out of range", lineno)
            if not 0 <= j < J:
                _fail("column index out of range", lineno)
            if not np.isfinite(v):
                _fail("non-finite value", lineno)
            ks.append(k)
            is_.append(i)
            js.append(j)
            vs.append(v)
    if header is None:
        raise DataError(f"empty file: {path}")
    K, J = header
    ks = np.asarray(ks, dtype=np.int64)
    is_ = np.asarray(is_, dtype=np.int64)
    js = np.asarray(js, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.float64)

    order = np.argsort(ks, kind="stable")
    bounds = np.searchsorted(ks[order], np.arange(K + 1))
    slices = []
    removed = 0
    for k in range(K):
        sel = order[bounds[k]:bounds[k + 1]]
        if len(sel) == 0:
            raise EmptySliceError(f"slice {k} has no entries")
        n_rows = int(is_[sel].max()) + 1
        sl = SparseSlice.from_coo(is_[sel], js[sel], vs[sel], (n_rows, J))
        if sl.nnz == 0:
            raise EmptySliceError(f"slice {k} has no non-zero entries")
        filtered, row_map = filter_zero_rows(sl)
        removed += n_rows - len(row_map)
        slices.append(filtered)
    if removed:
        log.warning("filtered %d all-zero rows", removed)
    return IrregularTensor.from_slices(slices)


def write_coordinate_file(tensor: IrregularTensor, path) -> None:
    """Write entries ordered by subject, then row, then column."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{tensor.n_slices} {tensor.n_cols}\n")
        for k, sl in enumerate(tensor):
            cols = sl.col_indices()
            order = np.lexsort((cols, sl.rows))
            fh.writelines(
                f"{k} {i} {j} {v!r}\n"
                for i, j, v in zip(sl.rows[order].tolist(), cols[order].tolist(), sl.vals[order].tolist())
            )


def _save_matrix(path: Path, name: str, a: np.ndarray):
    np.savetxt(path, a, fmt=FACTOR_FMT, delimiter=" ", header=f"{name} {a.shape[0]} x {a.shape[1]}")


def _load_matrix(path: Path, n_cols: int) -> np.ndarray:
    a = np.loadtxt(path, dtype=np.float64, ndmin=2, comments="#")
    if a.size == 0:
        a = a.reshape(0, n_cols)
    return a


def write_factors(factors, out_dir, config: dict | None = None, U: list | None = None) -> Path:
    """Write V, H, S (row k = diag S_k) and per-subject ``U_k`` plus a manifest.

    ``U`` defaults to ``Q_k H`` computed from ``factors``.
    """
    from .parafac2 import assemble_U

    out = Path(out_dir)
    (out / "U").mkdir(parents=True, exist_ok=True)
    if U is None:
        U = assemble_U(factors)
    K, R = factors.S.shape
    u_files = [f"U/U_{k:05d}.txt" for k in range(K)]
    _save_matrix(out / "V.txt", "V", factors.V)
    _save_matrix(out / "H.txt", "H", factors.H)
    _save_matrix(out / "S.txt", "S", factors.S)
    for k, (name, u) in enumerate(zip(u_files, U)):
        _save_matrix(out / name, f"U_{k}", u)
    manifest = {
        "format": FACTOR_FORMAT,
        "version": 1,
        "K": K,
        "J": int(factors.V.shape[0]),
        "R": R,
        "row_counts": [int(u.shape[0]) for u in U],
        "files": {"V": "V.txt", "H": "H.txt", "S": "S.txt", "U": u_files},
        "config": config or {},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


@dataclass
class ExportedFactors:
    H: np.ndarray
    S: np.ndarray
    V: np.ndarray
    U: list
    manifest: dict

    @property
    def rank(self) -> int:
        return self.S.shape[1]


def read_factors(out_dir, load_u: bool = True) -> ExportedFactors:
    out = Path(out_dir)
    try:
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"no manifest.json in {out}") from None
    if manifest.get("format") != FACTOR_FORMAT:
        raise DataError(f"{out} is not a factor directory")
    R = manifest["R"]
    files = manifest["files"]
    U = [_load_matrix(out / f, R) for f in files["U"]] if load_u else []
    return ExportedFactors(
        H=_load_matrix(out / files["H"], R),
        S=_load_matrix(out / files["S"], R),
        V=_load_matrix(out / files["V"], R),
        U=U,
        manifest=manifest,
    )


def rank_components(factors, k: int, top_n: int | None = None) -> list[tuple[int, float]]:
    """Components of subject ``k`` ordered by ``S[k]`` descending, ties by lower index."""
    S = np.asarray(factors.S)
    K, R = S.shape
    if not 0 <= k < K:
        raise DataError(f"subject {k} out of range for K={K}")
    if top_n is None:
        top_n = R
    if not 1 <= top_n <= R:
        raise DataError(f"top_n must lie in [1, {R}], got {top_n}")
    scores = S[k]
    order = sorted(range(R), key=lambda r: (-scores[r], r))
    return [(r, float(scores[r])) for r in order[:top_n]]
