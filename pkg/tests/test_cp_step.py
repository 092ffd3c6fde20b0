import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparsepf2.cp_step import CpFactors, cp_als_iteration, cp_objective, normalize_columns
from sparsepf2.irregular import DenseSliceCollection


def model_slices(H, V, W):
    return DenseSliceCollection.from_dense([(H * w) @ V.T for w in W])


def test_normalize_columns():
    A = np.array([[3.0, 0.0], [4.0, 0.0]])
    B, n = normalize_columns(A)
    np.testing.assert_array_equal(n, [5, 0])
    np.testing.assert_allclose(B, [[0.6, 0], [0.8, 0]])


@pytest.mark.parametrize("nonneg", [True, False])
def test_fixed_point(rng, nonneg):
    R, J, K = 3, 8, 6
    H, V, W = rng.random((R, R)), rng.random((J, R)), rng.random((K, R))
    Y = model_slices(H, V, W)
    out = cp_als_iteration(Y, CpFactors(H, V, W), nonneg=nonneg)
    assert cp_objective(Y, out) <= 1e-18
    np.testing.assert_allclose(np.linalg.norm(out.H, axis=0), 1.0)
    np.testing.assert_allclose(np.linalg.norm(out.V, axis=0), 1.0)


def test_rank_one_closed_form(rng):
    y = rng.random(7) + 0.1
    Y = DenseSliceCollection.from_dense([y[None, :]])
    out = cp_als_iteration(Y, CpFactors([[1.0]], rng.random((7, 1)), [[1.0]]))
    np.testing.assert_allclose(out.H, [[1.0]])
    np.testing.assert_allclose(out.V[:, 0], y / np.linalg.norm(y), rtol=1e-13)
    np.testing.assert_allclose(out.W, [[np.linalg.norm(y)]], rtol=1e-13)
    assert cp_objective(Y, out) < 1e-25


@given(st.integers(1, 10), st.integers(2, 12), st.integers(1, 4), st.booleans(), st.integers(0, 2**32 - 1))
def test_objective_never_increases(K, J, R, nonneg, seed):
    rng = np.random.default_rng(seed)
    mats = [rng.standard_normal((R, J)) * (rng.random(J) < 0.6) for _ in range(K)]
    Y = DenseSliceCollection.from_dense(mats)
    f = CpFactors(rng.standard_normal((R, R)), rng.random((J, R)), rng.random((K, R)))
    prev = cp_objective(Y, f)
    scale = sum(np.sum(m**2) for m in mats) + prev
    for _ in range(5):
        f = cp_als_iteration(Y, f, nonneg=nonneg)
        obj = cp_objective(Y, f)
        assert obj <= prev + 1e-9 * scale
        if nonneg:
            assert (f.V >= 0).all() and (f.W >= 0).all()
        prev = obj


def test_normalize_w_keeps_model(rng):
    R, J, K = 2, 5, 4
    Y = model_slices(rng.random((R, R)), rng.random((J, R)), rng.random((K, R)))
    f = CpFactors(np.eye(R), rng.random((J, R)), rng.random((K, R)))
    a = cp_als_iteration(Y, f)
    b = cp_als_iteration(Y, f, normalize_w=True)
    np.testing.assert_allclose(np.linalg.norm(b.W, axis=0), 1.0)
    np.testing.assert_allclose(b.W * b.lam, a.W, rtol=1e-12)
    np.testing.assert_array_equal(a.lam, 1.0)


def test_singular_gram_handled(rng):
    # duplicate columns make every Gram-Hadamard matrix singular
    R, J, K = 2, 5, 3
    V = np.repeat(rng.random((J, 1)), 2, axis=1)
    W = np.repeat(rng.random((K, 1)), 2, axis=1)
    Y = model_slices(rng.random((R, R)), rng.random((J, R)), rng.random((K, R)))
    out = cp_als_iteration(Y, CpFactors(np.eye(R), V, W), nonneg=False)
    assert np.isfinite(out.H).all() and np.isfinite(out.V).all() and np.isfinite(out.W).all()
