import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpclogz.linalg import (
    KernelSpec, NotPositiveDefinite, build_kernel, cho_solve, cholesky, row_scale,
    solve_lower, solve_upper, woodbury_inverse,
)


def test_kernel_diagonal_is_amplitude_squared():
    X = np.array([[0.3, -1.0], [2.0, 5.0]])
    K = build_kernel(X, KernelSpec(0.7, 1.3, jitter=0.0))
    assert np.all(np.diag(K) == 1.3**2)


def test_kernel_hard_setting_diagonal():
    spec = KernelSpec(math.exp(4.85), math.exp(5.1), jitter=0.0)
    K = build_kernel(np.zeros((1, 3)), spec)
    assert K[0, 0] == pytest.approx(26903.186, rel=1e-8)


def test_kernel_at_sqrt2_lengthscale():
    ell = 0.9
    X = np.array([[0.0], [ell * math.sqrt(2.0)]])
    K = build_kernel(X, KernelSpec(ell, 1.0, jitter=0.0))
    assert K[0, 1] == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_kernel_symmetric_and_jitter():
    X = np.random.default_rng(0).standard_normal((30, 4))
    K = build_kernel(X, KernelSpec(1.5, 2.0))
    assert np.array_equal(K, K.T)
    assert np.allclose(np.diag(K), 4.0 + 4e-8)


def test_kernel_rejects_nonfinite():
    with pytest.raises(ValueError):
        build_kernel(np.array([[0.0], [np.nan]]), KernelSpec(1.0, 1.0))


@pytest.mark.parametrize("bad", [dict(lengthscale=0.0, amplitude=1.0), dict(lengthscale=1.0, amplitude=-1.0),
                                 dict(lengthscale=1.0, amplitude=1.0, jitter=-1e-3)])
def test_kernel_spec_validation(bad):
    with pytest.raises(ValueError):
        KernelSpec(**bad)


def test_duplicate_inputs_finite_logdet():
    X = np.zeros((5, 2))
    K = build_kernel(X, KernelSpec(1.0, 1.0))
    assert math.isfinite(cholesky(K).log_det)


def test_cholesky_identity():
    c = cholesky(np.eye(3))
    assert np.array_equal(c.L, np.eye(3))
    assert c.log_det == 0.0


def test_cholesky_hand_example():
    c = cholesky(np.array([[4.0, 2.0], [2.0, 5.0]]))
    assert np.allclose(c.L, [[2.0, 0.0], [1.0, 2.0]], atol=1e-15)
    assert c.log_det == pytest.approx(math.log(16.0), abs=1e-14)


def test_cholesky_pivot_reported():
    with pytest.raises(NotPositiveDefinite) as err:
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert err.value.pivot == 2


def test_triangular_solves():
    L = np.array([[2.0, 0.0], [1.0, 2.0]])
    assert np.allclose(solve_lower(L, np.array([2.0, 3.0])), [1.0, 1.0])
    B = np.random.default_rng(1).standard_normal((2, 3))
    assert np.allclose(solve_lower(np.eye(2), B), B)
    with pytest.raises(ValueError):
        solve_lower(L, np.ones(3))
    with pytest.raises(ValueError):
        solve_upper(L, np.ones((3, 2)))


def test_row_scale():
    A = np.random.default_rng(2).standard_normal((4, 4))
    s = np.array([1.5, -2.0, 0.3, 7.0])
    assert np.array_equal(row_scale(A, s), np.diag(s) @ A)
    assert np.array_equal(row_scale(A, np.ones(4)), A)
    assert np.array_equal(row_scale(np.eye(2), np.array([2.0, 3.0])), np.diag([2.0, 3.0]))
    with pytest.raises(ValueError):
        row_scale(A, np.ones(3))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 64), seed=st.integers(0, 2**31))
def test_cholesky_property(n, seed):
    M = np.random.default_rng(seed).standard_normal((n, n))
    A = M.T @ M + np.eye(n)
    c = cholesky(A)
    assert np.linalg.norm(c.L @ c.L.T - A) / np.linalg.norm(A) < 1e-10
    assert np.all(np.diag(c.L) > 0)
    assert np.allclose(np.triu(c.L, 1), 0.0)
    b = np.random.default_rng(seed + 1).standard_normal(n)
    x = cho_solve(c, b)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) < 1e-8
    assert c.log_det == pytest.approx(np.linalg.slogdet(A)[1], rel=1e-10, abs=1e-10)


def test_woodbury_inverse_matches_dense():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((6, 6))
    A = M @ M.T + np.eye(6)
    s = rng.random(6) + 0.1
    W, ld = woodbury_inverse(A, s)
    dense = np.linalg.inv(np.linalg.inv(A) + np.diag(s**2))
    assert np.allclose(W, dense, rtol=1e-10, atol=1e-12)
    assert ld == pytest.approx(np.linalg.slogdet(np.eye(6) + np.diag(s) @ A @ np.diag(s))[1], rel=1e-12)
