"""Timing harness: slice-wise MTTKRP kernels against the materialized Khatri-Rao path."""
from __future__ import annotations

import gc
import os
import statistics
import tempfile
import time
import tracemalloc
from dataclasses import asdict, dataclass, field

import numpy as np

from .irregular import DenseSliceCollection, IrregularTensor
from .mttkrp import MttkrpInput, khatri_rao_shape, mttkrp, naive_mttkrp
from .parafac2 import SolverConfig, _procrustes_all, _project_stacked, initialize

MODES = (1, 2, 3)


@dataclass
class BenchRow:
    kernel: str
    mode: str
    reps: int
    times_ms: list = field(default_factory=list)
    median_ms: float | None = None
    status: str = "ok"
    kr_bytes: int = 0
    peak_bytes: int | None = None


@dataclass
class BenchReport:
    data: dict
    rank: int
    threads: int
    budget_bytes: int
    rows: list = field(default_factory=list)
    speedup: dict = field(default_factory=dict)
    y_bytes: int = 0

    def row(self, kernel: str, mode) -> BenchRow:
        for r in self.rows:
            if r.kernel == kernel and r.mode == str(mode):
                return r
        raise KeyError((kernel, mode))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["rows"] = [asdict(r) for r in self.rows]
        return out


def data_summary(X: IrregularTensor) -> dict:
    return {
        "K": X.n_slices,
        "J": X.n_cols,
        "max_I": X.max_rows,
        "mean_I": float(X.row_counts.mean()),
        "nnz": X.total_nnz,
    }


def kr_bytes(Y: DenseSliceCollection, mode: int) -> int:
    rows, cols = khatri_rao_shape(Y, mode)
    return rows * cols * 8


def bench_inputs(X: IrregularTensor, rank: int, seed: int = 0, threads: int = 1):
    """Projected slices from one Procrustes pass, plus random H, V, W."""
    cfg = SolverConfig(rank=rank, seed=seed, threads=threads)
    f = initialize(X, cfg)
    Q = _procrustes_all(X, f.H, f.S, f.V, threads)
    Y = _project_stacked(X, Q, threads)
    rng = np.random.Generator(np.random.PCG64(seed + 1))
    H = rng.random((rank, rank))
    V = rng.random((X.n_cols, rank))
    W = rng.random((X.n_slices, rank))
    return Y, H, V, W


def _peak_bytes(fn) -> int:
    gc.collect()
    tracemalloc.start()
    try:
        fn()
        return tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()


def bench_mttkrp(
    X: IrregularTensor,
    rank: int,
    modes=MODES,
    reps: int = 3,
    threads: int = 1,
    budget_mb: float = 1024.0,
    seed: int = 0,
    spill_dir: str | None = None,
    include_naive: bool = True,
) -> BenchReport:
    """Median timings per mode and for the full sweep over ``modes``.

    A naive cell whose Khatri-Rao product exceeds ``budget_mb`` is marked
    ``OoM`` without running, unless ``spill_dir`` is given; then the
    product is materialized in a disk-backed memory map there.
    ``speedup`` is naive median over specialized median.
    """
    modes = tuple(int(m) for m in modes)
    Y, H, V, W = bench_inputs(X, rank, seed, threads)
    inputs = {m: MttkrpInput(Y, H, V, W, m) for m in modes}
    budget = int(budget_mb * 2**20)
    report = BenchReport(data_summary(X), rank, threads, budget, y_bytes=Y.values.nbytes)

    # compile outside the timed region
    for m in modes:
        mttkrp(inputs[m], threads)

    spec_rows = {m: BenchRow("specialized", str(m), reps) for m in modes}
    spec_sweep = BenchRow("specialized", "sweep", reps)
    for _ in range(reps):
        total = 0.0
        for m in modes:
            t0 = time.perf_counter()
            mttkrp(inputs[m], threads)
            dt = 1e3 * (time.perf_counter() - t0)
            spec_rows[m].times_ms.append(dt)
            total += dt
        spec_sweep.times_ms.append(total)
    for m in modes:
        spec_rows[m].peak_bytes = _peak_bytes(lambda: mttkrp(inputs[m], threads))
    spec_sweep.peak_bytes = _peak_bytes(lambda: [mttkrp(inputs[m], threads) for m in modes])
    for r in (*spec_rows.values(), spec_sweep):
        r.median_ms = statistics.median(r.times_ms)
    report.rows.extend([*spec_rows.values(), spec_sweep])

    if not include_naive:
        return report

    naive_rows = {m: BenchRow("naive", str(m), reps, kr_bytes=kr_bytes(Y, m)) for m in modes}
    naive_sweep = BenchRow("naive", "sweep", reps, kr_bytes=max(r.kr_bytes for r in naive_rows.values()))
    for m in modes:
        row = naive_rows[m]
        spill = row.kr_bytes > budget
        if spill and spill_dir is None:
            row.status = "OoM"
            continue
        for _ in range(reps):
            try:
                dt = _time_naive(inputs[m], spill_dir if spill else None)
            except MemoryError:
                row.status = "OoM"
                row.times_ms.clear()
                break
            row.times_ms.append(dt)
        else:
            row.median_ms = statistics.median(row.times_ms)
            if spill:
                row.status = "ok (spilled to disk)"
    report.rows.extend(naive_rows.values())

    if all(r.median_ms is not None for r in naive_rows.values()):
        naive_sweep.times_ms = [sum(ts) for ts in zip(*(naive_rows[m].times_ms for m in modes))]
        naive_sweep.median_ms = statistics.median(naive_sweep.times_ms)
        if any(r.status != "ok" for r in naive_rows.values()):
            naive_sweep.status = "ok (spilled to disk)"
    else:
        naive_sweep.status = "OoM"
    report.rows.append(naive_sweep)

    for key in (*map(str, modes), "sweep"):
        n, s = report.row("naive", key), report.row("specialized", key)
        report.speedup[key] = n.median_ms / s.median_ms if n.median_ms is not None and s.median_ms else None
    return report


def _time_naive(inp: MttkrpInput, spill_dir: str | None) -> float:
    gc.collect()
    if spill_dir is None:
        t0 = time.perf_counter()
        naive_mttkrp(inp)
        return 1e3 * (time.perf_counter() - t0)
    fd, path = tempfile.mkstemp(suffix=".kr", dir=spill_dir)
    os.close(fd)
    try:
        t0 = time.perf_counter()
        buf = np.memmap(path, dtype=np.float64, mode="w+", shape=khatri_rao_shape(inp.slices, inp.mode))
        naive_mttkrp(inp, kr_out=buf)
        dt = 1e3 * (time.perf_counter() - t0)
        del buf
        return dt
    finally:
        os.unlink(path)
