"""PARAFAC2 fitting by alternating least squares.

Model: ``X_k ~ Q_k H diag(S[k]) V^T`` with column-orthonormal ``Q_k``
(I_k x R), a shared ``H`` (R x R) and ``V`` (J x R). Each outer iteration

1. solves one orthogonal Procrustes problem per subject for ``Q_k``,
2. projects ``Y_k = Q_k^T X_k`` (only the non-zero columns of ``X_k``),
3. runs one CP-ALS sweep on ``{Y_k}`` for ``H``, ``V`` and ``W``,
4. sets ``S[k] = W[k]``.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import _kernels
from .cp_step import CpFactors, cp_als_iteration
from .dense import economy_svd, gram
from .errors import ConfigError, DataError, NumericalError, RankError
from .irregular import DenseSliceCollection, IrregularTensor, SparseSlice, frobenius_sq
from .mttkrp import mttkrp_mode3

log = logging.getLogger(__name__)

PRNG = "PCG64"
FIT_EPS = 1e-12
DENSE_EIG_MAX_J = 2000


@dataclass(frozen=True)
class SolverConfig:
    rank: int
    max_iters: int = 200
    tol: float = 1e-8
    nonneg: bool = True
    init: str = "random"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError(f"rank must be >= 1, got {self.rank}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be > 0, got {self.tol}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.init not in ("random", "eye"):
            raise ConfigError(f"init must be 'random' or 'eye', got {self.init!r}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Parafac2Factors:
    """Model state. ``S[k]`` is the diagonal of ``S_k``; ``Q`` is None before the first Procrustes pass."""

    H: np.ndarray
    S: np.ndarray
    V: np.ndarray
    Q: list | None = None

    @property
    def rank(self) -> int:
        return self.H.shape[1]

    @property
    def n_slices(self) -> int:
        return self.S.shape[0]


@dataclass
class IterationRecord:
    iteration: int
    residual_sq: float
    fit: float
    procrustes_ms: float
    project_ms: float
    cp_ms: float


@dataclass
class FitTrace:
    records: list = field(default_factory=list)
    converged: bool = False

    @property
    def residual_sq(self) -> np.ndarray:
        return np.array([r.residual_sq for r in self.records])

    @property
    def fit(self) -> np.ndarray:
        return np.array([r.fit for r in self.records])

    @property
    def final_fit(self) -> float:
        return self.records[-1].fit if self.records else float("nan")

    def __len__(self) -> int:
        return len(self.records)

    def to_rows(self) -> list[dict]:
        return [asdict(r) for r in self.records]


def _check_rank(X: IrregularTensor, R: int):
    if X.n_cols < R:
        raise RankError(f"rank exceeds variables: R={R} > J={X.n_cols}")
    short = np.flatnonzero(X.row_counts < R)
    if len(short):
        k = int(short[0])
        raise RankError(
            f"rank exceeds observations: R={R} > I_k={int(X.row_counts[k])} for subject {k}"
            f" ({len(short)} subjects affected)"
        )


def initialize(X: IrregularTensor, config: SolverConfig) -> Parafac2Factors:
    """Starting point: ``H = I``, ``S[k] = 1`` and ``V`` from ``config.init``.

    ``random`` draws V uniformly from [0, 1) with a seeded PCG64 generator;
    ``eye`` takes the R leading eigenvectors of ``sum_k X_k^T X_k`` with
    absolute values applied.
    """
    R = config.rank
    _check_rank(X, R)
    J = X.n_cols
    if config.init == "random":
        rng = np.random.Generator(np.random.PCG64(config.seed))
        V = rng.random((J, R))
    else:
        A = X.stacked_csr()
        G = (A.T @ A).tocsc()
        if J <= DENSE_EIG_MAX_J or R >= J - 1:
            evals, evecs = np.linalg.eigh(G.toarray())
            V = evecs[:, np.argsort(evals)[::-1][:R]]
        else:
            v0 = np.ones(J) / math.sqrt(J)
            evals, evecs = spla.eigsh(G, k=R, which="LA", v0=v0)
            V = evecs[:, np.argsort(evals)[::-1]]
        V = np.abs(V)
    return Parafac2Factors(H=np.eye(R), S=np.ones((X.n_slices, R)), V=np.ascontiguousarray(V))


def _procrustes_from_xv(XV: np.ndarray, H: np.ndarray, s: np.ndarray) -> np.ndarray:
    # argmin ||X - Q H S V^T|| over orthonormal Q: SVD of H S (X V)^T = P sigma Z^T, Q = Z P^T
    P, _, Z = economy_svd((H * s) @ XV.T)
    return Z @ P.T


def procrustes_update(X_k: SparseSlice, H, s_k, V) -> np.ndarray:
    """Column-orthonormal ``Q_k`` minimizing ``||X_k - Q_k H diag(s_k) V^T||_F``."""
    H = np.asarray(H, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    s_k = np.asarray(s_k, dtype=np.float64)
    R = H.shape[1]
    if X_k.n_rows < R:
        raise RankError(f"rank exceeds observations: R={R} > I_k={X_k.n_rows}")
    XV = np.zeros((X_k.n_rows, R))
    col_of_entry = X_k.col_indices()
    np.add.at(XV, X_k.rows, X_k.vals[:, None] * V[col_of_entry])
    return _procrustes_from_xv(XV, H, s_k)


def _procrustes_all(X: IrregularTensor, H, S, V, threads: int) -> np.ndarray:
    """Row-stacked ``Q_k`` for every subject."""
    row_ptr = X.row_ptr
    XV = np.zeros((int(row_ptr[-1]), H.shape[1]))
    with _kernels.using_threads(threads):
        _kernels.slices_times(X.slice_ptr, X.cols, X.colptr, X.rows, X.vals, row_ptr, V, XV)
    Q = np.empty_like(XV)

    def solve(ks):
        for k in ks:
            r0, r1 = row_ptr[k], row_ptr[k + 1]
            Q[r0:r1] = _procrustes_from_xv(XV[r0:r1], H, S[k])

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(solve, np.array_split(np.arange(X.n_slices), threads)))
    else:
        solve(range(X.n_slices))
    return Q


def _project_stacked(X: IrregularTensor, Q: np.ndarray, threads: int) -> DenseSliceCollection:
    out = np.empty((len(X.cols), Q.shape[1]))
    with _kernels.using_threads(threads):
        _kernels.project(X.slice_ptr, X.colptr, X.rows, X.vals, X.row_ptr, Q, out)
    return DenseSliceCollection(Q.shape[1], X.n_cols, X.slice_ptr, X.cols, out)


def project_slices(X: IrregularTensor, Q, threads: int = 1) -> DenseSliceCollection:
    """``Y_k = Q_k^T X_k`` computed over the non-zero columns of each ``X_k``."""
    Q = list(Q)
    if len(Q) != X.n_slices:
        raise DataError(f"got {len(Q)} Q matrices for {X.n_slices} slices")
    for k, (q, n) in enumerate(zip(Q, X.row_counts)):
        if q.shape[0] != n:
            raise DataError(f"Q_{k} has {q.shape[0]} rows, slice has {n}")
    return _project_stacked(X, np.ascontiguousarray(np.concatenate(Q, axis=0), dtype=np.float64), threads)


def residual_sq(x_norm_sq: float, Y: DenseSliceCollection, H, S, V, threads: int = 1) -> float:
    """``sum_k ||X_k - Q_k H diag(S[k]) V^T||^2`` without forming any reconstruction.

    Uses ``<X_k, Q_k H S_k V^T> = <Y_k, H S_k V^T> = S[k] . colwise_dot(H, Y_k V)``
    and ``||Q_k H S_k V^T||^2 = S[k]^T ((H^T H) * (V^T V)) S[k]``.
    """
    cross = float(np.sum(S * mttkrp_mode3(Y, H, V, threads)))
    model = float(np.einsum("kr,rs,ks->", S, gram(H) * gram(V), S))
    return max(x_norm_sq - 2.0 * cross + model, 0.0)


def assemble_U(factors: Parafac2Factors) -> list[np.ndarray]:
    """``U_k = Q_k H`` for every subject."""
    if factors.Q is None:
        raise ValueError("factors have no Q; run at least one iteration")
    return [q @ factors.H for q in factors.Q]


def _split_rows(X: IrregularTensor, Q: np.ndarray) -> list[np.ndarray]:
    row_ptr = X.row_ptr
    return [Q[row_ptr[k]:row_ptr[k + 1]] for k in range(X.n_slices)]


def fit_parafac2(X: IrregularTensor, config: SolverConfig, callback=None) -> tuple[Parafac2Factors, FitTrace]:
    """Fit PARAFAC2 by ALS until the relative fit change drops below ``config.tol``.

    ``fit = 1 - residual_sq / ||X||^2`` is evaluated at the end of every
    iteration; iteration ``t`` stops the loop when
    ``|fit_t - fit_{t-1}| / max(fit_{t-1}, 1e-12) < tol`` (``fit_0 = 0``).
    ``callback(record, factors)`` is called after every iteration.
    """
    factors = initialize(X, config)
    H, S, V = factors.H, factors.S, factors.V
    x_norm_sq = frobenius_sq(X)
    threads = config.threads
    trace = FitTrace()
    prev_fit = 0.0
    Q = None
    for it in range(1, config.max_iters + 1):
        t0 = time.perf_counter()
        Q = _procrustes_all(X, H, S, V, threads)
        t1 = time.perf_counter()
        Y = _project_stacked(X, Q, threads)
        t2 = time.perf_counter()
        cp = cp_als_iteration(Y, CpFactors(H, V, S), nonneg=config.nonneg, threads=threads)
        H, V, S = cp.H, cp.V, cp.W
        t3 = time.perf_counter()

        resid = residual_sq(x_norm_sq, Y, H, S, V, threads)
        fit = 1.0 - resid / x_norm_sq if x_norm_sq > 0 else 0.0
        if not (math.isfinite(resid) and np.isfinite(H).all() and np.isfinite(V).all() and np.isfinite(S).all()):
            raise NumericalError(f"numerical divergence at iteration {it}")
        record = IterationRecord(it, resid, fit, 1e3 * (t1 - t0), 1e3 * (t2 - t1), 1e3 * (t3 - t2))
        trace.records.append(record)
        if callback is not None:
            callback(record, Parafac2Factors(H=H, S=S, V=V, Q=_split_rows(X, Q)))
        if abs(fit - prev_fit) / max(prev_fit, FIT_EPS) < config.tol:
            trace.converged = True
            break
        prev_fit = fit

    log.debug("fit finished after %d iterations, fit=%.10f", len(trace), trace.final_fit)
    return Parafac2Factors(H=H, S=S, V=V, Q=_split_rows(X, Q)), trace


def fit_with_restarts(X: IrregularTensor, config: SolverConfig, restarts: int = 1):
    """Run ``restarts`` fits with seeds ``seed, seed+1, ...`` and keep the best final fit.

    Returns ``(best_factors, best_trace, best_index, all_traces)``.
    """
    if restarts < 1:
        raise ConfigError(f"restarts must be >= 1, got {restarts}")
    best = None
    traces = []
    for i in range(restarts):
        cfg = SolverConfig(**{**config.to_dict(), "seed": config.seed + i})
        factors, trace = fit_parafac2(X, cfg)
        traces.append(trace)
        if best is None or trace.final_fit > best[1].final_fit:
            best = (factors, trace, i)
    return best[0], best[1], best[2], traces
