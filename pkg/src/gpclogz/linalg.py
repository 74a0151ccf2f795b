"""Kernel construction and dense symmetric-positive-definite linear algebra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Cholesky factorisation hit a non-positive pivot.

    ``pivot`` is 1-based, matching LAPACK's ``info`` convention.
    """

    def __init__(self, pivot: int):
        super().__init__(f"matrix is not positive definite (failing pivot {pivot})")
        self.pivot = pivot


@dataclass(frozen=True)
class KernelSpec:
    """Squared-exponential covariance ``K_mn = amplitude**2 exp(-|d|^2 / (2 lengthscale**2))``.

    ``jitter=None`` means the default diagonal regulariser ``1e-8 * amplitude**2``.
    """

    lengthscale: float
    amplitude: float
    jitter: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if not (np.isfinite(self.amplitude) and self.amplitude > 0):
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")
        if self.jitter is not None and not (np.isfinite(self.jitter) and self.jitter >= 0):
            raise ValueError(f"jitter must be nonnegative, got {self.jitter}")

    @property
    def effective_jitter(self) -> float:
        if self.jitter is None:
            return 1e-8 * self.amplitude**2
        return float(self.jitter)


@dataclass(frozen=True)
class CholFactor:
    """Lower Cholesky factor ``L`` of a matrix together with its log-determinant."""

    L: np.ndarray
    log_det: float

    @property
    def n(self) -> int:
        return self.L.shape[0]


def build_kernel(inputs: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Squared-exponential kernel matrix for the rows of ``inputs`` (N x D).

    The upper triangle is computed and mirrored, so the result is exactly
    symmetric.
    """
    X = np.asarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"inputs must be an N x D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs contain non-finite coordinates")
    n = X.shape[0]
    scaled = X / spec.lengthscale
    sq = np.sum(scaled**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * scaled @ scaled.T
    np.maximum(d2, 0.0, out=d2)
    K = spec.amplitude**2 * np.exp(-0.5 * d2)
    iu = np.triu_indices(n, 1)
    K.T[iu] = K[iu]
    K[np.diag_indices(n)] = spec.amplitude**2 + spec.effective_jitter
    return K


def cholesky(A: np.ndarray) -> CholFactor:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises:
        NotPositiveDefinite: with the 1-based index of the failing pivot.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite entries")
    L, info = lapack.dpotrf(A, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefinite(int(info))
    if info < 0:
        raise ValueError(f"dpotrf argument {-info} invalid")
    return CholFactor(L=L, log_det=2.0 * float(np.sum(np.log(np.diag(L)))))


def _check_rhs(L: np.ndarray, B: np.ndarray) -> None:
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError(f"triangular factor must be square, got shape {L.shape}")
    if B.shape[0] != L.shape[0]:
        raise ValueError(f"dimension mismatch: factor is {L.shape}, right-hand side {B.shape}")


def solve_lower(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``L X = B`` for lower-triangular ``L`` (MATLAB's ``L \\ B``)."""
    L = np.asarray(L, dtype=float)
    B = np.asarray(B, dtype=float)
    _check_rhs(L, B)
    return solve_triangular(L, B, lower=True, check_finite=False)


def solve_upper(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``L^T X = B`` given the *lower* factor ``L``."""
    L = np.asarray(L, dtype=float)
    B = np.asarray(B, dtype=float)
    _check_rhs(L, B)
    return solve_triangular(L, B, lower=True, trans="T", check_finite=False)


def cho_solve(factor: CholFactor, b: np.ndarray) -> np.ndarray:
    return solve_upper(factor.L, solve_lower(factor.L, b))


def row_scale(A: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Row-wise product ``diag(s) @ A`` without forming the diagonal matrix."""
    A = np.asarray(A, dtype=float)
    s = np.asarray(s, dtype=float)
    if A.ndim != 2 or s.shape != (A.shape[0],):
        raise ValueError(f"cannot row-scale {A.shape} by vector of shape {s.shape}")
    return s[:, None] * A


def woodbury_inverse(A: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, float]:
    """Return ``(A^-1 + diag(s)^2)^-1`` and ``log|I + S A S|``.

    Uses ``chol(I + A o s s^T)`` so no inverse of ``A`` is ever formed.
    """
    n = A.shape[0]
    M = A * np.outer(s, s)
    M[np.diag_indices(n)] += 1.0
    Ls = cholesky(M)
    V = solve_lower(Ls.L, row_scale(A, s))
    out = A - V.T @ V
    return 0.5 * (out + out.T), Ls.log_det
