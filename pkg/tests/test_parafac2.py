import math

import numpy as np
import pytest

from conftest import random_orthonormal, random_tensor
from oracles import direct_residual_sq, procrustes_objective
from sparsepf2 import parafac2
from sparsepf2.cp_step import CpFactors
from sparsepf2.errors import ConfigError, DataError, NumericalError, RankError
from sparsepf2.irregular import IrregularTensor, SparseSlice, frobenius_sq
from sparsepf2.parafac2 import (
    Parafac2Factors,
    SolverConfig,
    assemble_U,
    fit_parafac2,
    fit_with_restarts,
    initialize,
    procrustes_update,
    project_slices,
    residual_sq,
)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"rank": 0}, {"rank": 2, "tol": 0.0}, {"rank": 2, "max_iters": 0},
        {"rank": 2, "init": "svd"}, {"rank": 2, "threads": 0},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SolverConfig(**kw)


class TestInitialize:
    def test_random_reproducible(self, rng):
        X = random_tensor(rng, 4, 6, 2)
        a = initialize(X, SolverConfig(rank=2, seed=7))
        b = initialize(X, SolverConfig(rank=2, seed=7))
        np.testing.assert_array_equal(a.V, b.V)
        assert a.V.shape == (6, 2) and (a.V >= 0).all() and (a.V < 1).all()
        np.testing.assert_array_equal(a.H, np.eye(2))
        np.testing.assert_array_equal(a.S, np.ones((4, 2)))
        assert a.Q is None

    def test_seed_changes_v(self, rng):
        X = random_tensor(rng, 4, 6, 2)
        assert not np.array_equal(initialize(X, SolverConfig(rank=2, seed=1)).V,
                                  initialize(X, SolverConfig(rank=2, seed=2)).V)

    def test_eye_single_column(self):
        A = np.zeros((3, 5))
        A[:, 3] = [1.0, 2.0, 3.0]
        X = IrregularTensor.from_dense([A, A[:2]])
        V = initialize(X, SolverConfig(rank=1, init="eye")).V
        np.testing.assert_allclose(V[:, 0], np.eye(5)[3], atol=1e-12)

    def test_eye_sparse_path_matches_dense(self, rng, monkeypatch):
        X = random_tensor(rng, 30, 40, 3, density=0.3)
        dense = initialize(X, SolverConfig(rank=3, init="eye")).V
        monkeypatch.setattr(parafac2, "DENSE_EIG_MAX_J", 10)
        sparse = initialize(X, SolverConfig(rank=3, init="eye")).V
        np.testing.assert_allclose(sparse, dense, atol=1e-8)

    def test_rank_exceeds_variables(self, rng):
        X = random_tensor(rng, 2, 3, 1, I_range=(5, 6))
        with pytest.raises(RankError, match="rank exceeds variables"):
            initialize(X, SolverConfig(rank=4))

    def test_rank_exceeds_observations(self):
        X = IrregularTensor.from_dense([np.ones((3, 6)), np.eye(6)[:2] + 0.5])
        with pytest.raises(RankError, match="rank exceeds observations"):
            initialize(X, SolverConfig(rank=3))


class TestProcrustes:
    def test_orthonormal_target(self, rng):
        Xk = random_orthonormal(rng, 6, 3)
        Q = procrustes_update(SparseSlice.from_dense(Xk), np.eye(3), np.ones(3), np.eye(3))
        np.testing.assert_allclose(Q, Xk, atol=1e-12)

    def test_noiseless_instance(self, rng):
        R, I, J = 3, 8, 5
        Qs = random_orthonormal(rng, I, R)
        H, s, V = rng.random((R, R)), rng.random(R), rng.random((J, R))
        Xk = Qs @ (H * s) @ V.T
        Q = procrustes_update(SparseSlice.from_dense(Xk), H, s, V)
        assert procrustes_objective(Xk, Q, H, s, V) < 1e-18
        np.testing.assert_allclose(Q.T @ Q, np.eye(R), atol=1e-12)

    def test_too_few_rows(self):
        with pytest.raises(RankError):
            procrustes_update(SparseSlice.from_dense(np.ones((1, 3))), np.eye(2), np.ones(2), np.ones((3, 2)))

    def test_batched_matches_single(self, rng):
        X = random_tensor(rng, 7, 6, 2)
        H, S, V = rng.random((2, 2)), rng.random((7, 2)), rng.random((6, 2))
        Q = parafac2._split_rows(X, parafac2._procrustes_all(X, H, S, V, 1))
        for k in range(7):
            np.testing.assert_allclose(Q[k], procrustes_update(X[k], H, S[k], V), atol=1e-13)


class TestProject:
    def test_identity_q(self, rng):
        mats = [rng.random((2, 4)) * (rng.random((2, 4)) < 0.7) + np.eye(2, 4) for _ in range(3)]
        X = IrregularTensor.from_dense(mats)
        Y = project_slices(X, [np.eye(2)] * 3)
        for k in range(3):
            np.testing.assert_array_equal(Y.dense(k), mats[k])

    def test_single_entry(self, rng):
        X = IrregularTensor.from_slices([SparseSlice.from_coo([1], [2], [4.0], (3, 5))])
        Q = random_orthonormal(rng, 3, 2)
        Y = project_slices(X, [Q])
        expected = np.zeros((2, 5))
        expected[:, 2] = 4.0 * Q[1]
        np.testing.assert_allclose(Y.dense(0), expected, atol=1e-15)
        assert list(Y.nnz_cols(0)) == [2]

    def test_shape_mismatch(self, rng):
        X = random_tensor(rng, 2, 4, 2)
        with pytest.raises(DataError):
            project_slices(X, [np.eye(2)])
        with pytest.raises(DataError):
            project_slices(X, [np.ones((X.row_counts[0] + 1, 2)), np.ones((X.row_counts[1], 2))])


class TestFit:
    def test_single_iteration_with_infinite_tol(self, rng):
        X = random_tensor(rng, 5, 6, 2)
        f, trace = fit_parafac2(X, SolverConfig(rank=2, tol=math.inf))
        assert len(trace) == 1 and trace.converged
        for k, q in enumerate(f.Q):
            assert q.shape == (X.row_counts[k], 2)
            np.testing.assert_allclose(q.T @ q, np.eye(2), atol=1e-10)
        assert f.S.shape == (5, 2) and (f.S >= 0).all() and (f.V >= 0).all()

    def test_residual_identity(self, rng):
        X = random_tensor(rng, 6, 7, 3)
        f, _ = fit_parafac2(X, SolverConfig(rank=3, max_iters=4, tol=1e-30))
        Y = project_slices(X, f.Q)
        fast = residual_sq(frobenius_sq(X), Y, f.H, f.S, f.V)
        assert fast == pytest.approx(direct_residual_sq(X, f.Q, f.H, f.S, f.V), rel=1e-9)

    def test_trace_fit_definition(self, rng):
        X = random_tensor(rng, 6, 7, 2)
        _, trace = fit_parafac2(X, SolverConfig(rank=2, max_iters=5, tol=1e-30))
        np.testing.assert_allclose(trace.fit, 1 - trace.residual_sq / frobenius_sq(X), rtol=1e-14)
        assert len(trace) == 5 and not trace.converged
        assert [r["iteration"] for r in trace.to_rows()] == [1, 2, 3, 4, 5]

    def test_threads_do_not_change_result(self, rng):
        X = random_tensor(rng, 40, 9, 3)
        a, ta = fit_parafac2(X, SolverConfig(rank=3, max_iters=10, threads=1))
        b, tb = fit_parafac2(X, SolverConfig(rank=3, max_iters=10, threads=3))
        np.testing.assert_array_equal(ta.residual_sq, tb.residual_sq)
        np.testing.assert_array_equal(a.V, b.V)
        np.testing.assert_array_equal(a.S, b.S)

    def test_divergence_reports_iteration(self, rng, monkeypatch):
        X = random_tensor(rng, 3, 5, 2)
        real = parafac2.cp_als_iteration
        calls = {"n": 0}

        def broken(Y, factors, **kw):
            calls["n"] += 1
            out = real(Y, factors, **kw)
            if calls["n"] == 2:
                return CpFactors(out.H, out.V, np.full_like(out.W, np.nan))
            return out

        monkeypatch.setattr(parafac2, "cp_als_iteration", broken)
        with pytest.raises(NumericalError, match="numerical divergence at iteration 2"):
            fit_parafac2(X, SolverConfig(rank=2, max_iters=10, tol=1e-30))

    def test_restarts_pick_best(self, rng):
        X = random_tensor(rng, 6, 6, 2)
        cfg = SolverConfig(rank=2, max_iters=3, seed=10)
        f, trace, best, traces = fit_with_restarts(X, cfg, restarts=3)
        assert len(traces) == 3
        assert trace.final_fit == max(t.final_fit for t in traces)
        _, single = fit_parafac2(X, SolverConfig(rank=2, max_iters=3, seed=10 + best))
        np.testing.assert_array_equal(single.fit, trace.fit)
        with pytest.raises(ConfigError):
            fit_with_restarts(X, cfg, restarts=0)


class TestAssembleU:
    def test_identity_h(self, rng):
        Q = [random_orthonormal(rng, 4, 2), random_orthonormal(rng, 3, 2)]
        U = assemble_U(Parafac2Factors(np.eye(2), np.ones((2, 2)), np.ones((3, 2)), Q))
        for u, q in zip(U, Q):
            np.testing.assert_array_equal(u, q)

    def test_scalar(self):
        U = assemble_U(Parafac2Factors(np.array([[2.0]]), np.ones((1, 1)), np.ones((2, 1)), [np.array([[1.0], [0.0]])]))
        np.testing.assert_array_equal(U[0], [[2.0], [0.0]])

    def test_cross_product_invariance(self, rng):
        X = random_tensor(rng, 8, 6, 3)
        f, _ = fit_parafac2(X, SolverConfig(rank=3, max_iters=5))
        Phi = f.H.T @ f.H
        for u in assemble_U(f):
            np.testing.assert_allclose(u.T @ u, Phi, atol=1e-6 * np.linalg.norm(Phi))

    def test_needs_q(self):
        with pytest.raises(ValueError):
            assemble_U(Parafac2Factors(np.eye(1), np.ones((1, 1)), np.ones((2, 1))))
