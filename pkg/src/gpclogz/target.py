"""Tempered GPC log-density, its gradient, the Hessian metric and the Riemannian Hamiltonian.

The tempered target bridges a Gaussian reference ``q = N(mu, Sigma)`` (either
the GP prior or an EP approximation) and the probit posterior::

    L_beta(x) = beta * [sum_n log Phi(y_n x_n) + log N(x; 0, K)]
                + (1 - beta) * log N(x; mu, Sigma)

with all Gaussian normalising constants included, so that ``Z(0) = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import probit
from .linalg import CholFactor, cholesky, row_scale, solve_lower, solve_upper, woodbury_inverse
from .probit import LOG_2PI


@dataclass(frozen=True, eq=False)
class TemperedTarget:
    """Parameters of ``L_beta``.

    Build with :meth:`from_prior` or :meth:`from_reference`; ``with_beta``
    re-targets an existing instance without refactorising anything.
    """

    y: np.ndarray
    K: np.ndarray
    chol_k: CholFactor
    mu: np.ndarray
    sigma_tilde: np.ndarray | None
    chol_sigma: CholFactor
    beta: float
    reference_is_prior: bool = field(default=True)
    # False drops the probit terms, leaving a Gaussian-to-Gaussian bridge (used for testing)
    has_likelihood: bool = field(default=True)

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.reference_is_prior:
            if self.sigma_tilde is None or np.any(self.sigma_tilde <= 0):
                raise ValueError("EP reference needs strictly positive site variances")

    @classmethod
    def from_prior(cls, y, K, beta: float = 1.0, chol_k: CholFactor | None = None,
                   has_likelihood: bool = True) -> TemperedTarget:
        y = probit.check_labels(y)
        K = np.asarray(K, dtype=float)
        chol_k = chol_k or cholesky(K)
        return cls(
            y=y, K=K, chol_k=chol_k, mu=np.zeros_like(y), sigma_tilde=None,
            chol_sigma=chol_k, beta=float(beta), reference_is_prior=True,
            has_likelihood=has_likelihood,
        )

    @classmethod
    def from_reference(
        cls, y, K, mu, sigma_tilde, chol_sigma: CholFactor, beta: float = 0.0,
        chol_k: CholFactor | None = None, has_likelihood: bool = True,
    ) -> TemperedTarget:
        y = probit.check_labels(y)
        K = np.asarray(K, dtype=float)
        return cls(
            y=y, K=K, chol_k=chol_k or cholesky(K), mu=np.asarray(mu, dtype=float),
            sigma_tilde=np.asarray(sigma_tilde, dtype=float), chol_sigma=chol_sigma,
            beta=float(beta), reference_is_prior=False, has_likelihood=has_likelihood,
        )

    def with_beta(self, beta: float) -> TemperedTarget:
        return replace(self, beta=float(beta))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def log_det_sigma(self) -> float:
        return self.chol_sigma.log_det

    @property
    def lik_beta(self) -> float:
        """Inverse temperature applied to the probit terms."""
        return self.beta if self.has_likelihood else 0.0

    @cached_property
    def metric_base(self) -> tuple[np.ndarray, float]:
        """``(A, log|A^-1|)`` with ``A^-1 = beta K^-1 + (1 - beta) Sigma^-1``.

        Independent of x, so computed once per inverse temperature.
        """
        if self.reference_is_prior:
            return self.K, -self.chol_k.log_det
        t = np.sqrt(1.0 - self.beta) / np.sqrt(self.sigma_tilde)
        A, log_det_it = woodbury_inverse(self.K, t)
        return A, -self.chol_k.log_det + log_det_it

    @cached_property
    def packed(self) -> tuple:
        """Fortran-ordered copies consumed by the compiled kernels."""
        A, log_det_a_inv = self.metric_base
        return (
            np.ascontiguousarray(self.y),
            np.asfortranarray(self.chol_k.L),
            float(self.chol_k.log_det),
            np.ascontiguousarray(self.mu),
            np.asfortranarray(self.chol_sigma.L),
            float(self.chol_sigma.log_det),
            np.asfortranarray(A),
            float(log_det_a_inv),
            float(self.beta),
            bool(self.reference_is_prior),
            1.0 if self.has_likelihood else 0.0,
        )

    def log_parts(self, x: np.ndarray) -> tuple[float, float, float]:
        """``(sum log Phi, log N(x; 0, K), log N(x; mu, Sigma))`` at x."""
        x = np.asarray(x, dtype=float)
        n = self.n
        loglik = float(np.sum(probit.log_ndtr(self.y * x))) if self.has_likelihood else 0.0
        f = solve_lower(self.chol_k.L, x)
        log_prior = -0.5 * n * LOG_2PI - 0.5 * self.chol_k.log_det - 0.5 * float(f @ f)
        if self.reference_is_prior:
            return loglik, log_prior, log_prior
        fq = solve_lower(self.chol_sigma.L, x - self.mu)
        log_q = -0.5 * n * LOG_2PI - 0.5 * self.chol_sigma.log_det - 0.5 * float(fq @ fq)
        return loglik, log_prior, log_q


@dataclass(frozen=True)
class TargetEval:
    L: float
    gradL: np.ndarray


@dataclass(frozen=True)
class MetricState:
    L: float
    gradL: np.ndarray
    Ginv: np.ndarray
    log_det_G: float
    dg: np.ndarray


@dataclass(frozen=True)
class HamiltonianEval:
    H: float
    gradHx: np.ndarray


def derivatives(target: TemperedTarget, x: np.ndarray) -> TargetEval:
    """``L_beta(x)`` and its gradient, normalising constants included."""
    x = np.asarray(x, dtype=float)
    beta = target.beta
    bl = target.lik_beta
    n = target.n
    z = target.y * x
    loglik = float(np.sum(probit.log_ndtr(z)))
    grad_ll = probit.grad_loglik(x, target.y)
    Lk = target.chol_k
    f = solve_lower(Lk.L, x)
    if target.reference_is_prior:
        L = bl * loglik - 0.5 * n * LOG_2PI - 0.5 * Lk.log_det - 0.5 * float(f @ f)
        grad = bl * grad_ll - solve_upper(Lk.L, f)
    else:
        Ls = target.chol_sigma
        fq = solve_lower(Ls.L, x - target.mu)
        L = (
            bl * loglik
            - 0.5 * n * LOG_2PI
            - beta * (0.5 * Lk.log_det + 0.5 * float(f @ f))
            - (1.0 - beta) * (0.5 * Ls.log_det + 0.5 * float(fq @ fq))
        )
        # gradient of the prior term is -beta K^-1 x
        grad = bl * grad_ll - beta * solve_upper(Lk.L, f) - (1.0 - beta) * solve_upper(Ls.L, fq)
    return TargetEval(L=L, gradL=grad)


def riemann_metric(target: TemperedTarget, x: np.ndarray) -> MetricState:
    """Inverse metric ``G^-1``, ``log|G|`` and ``dG_nn/dx_n`` at x.

    ``G(x) = Lambda(x) + beta K^-1 + (1 - beta) Sigma^-1`` is the negative
    Hessian of ``L_beta``. Both inverses are taken with the Woodbury identity
    through ``chol(I + A o s s^T)``, never inverting K.
    """
    x = np.asarray(x, dtype=float)
    ev = derivatives(target, x)
    d = probit.derivs(x, target.y, target.lik_beta)
    s = np.sqrt(d.lam)
    K = target.K
    n = target.n
    if target.reference_is_prior:
        M = K * np.outer(s, s)
        M[np.diag_indices(n)] += 1.0
        Ls = cholesky(M)
        V = solve_lower(Ls.L, row_scale(K, s))
        Ginv = K - V.T @ V
        log_det_G = -target.chol_k.log_det + Ls.log_det
    else:
        A, log_det_a_inv = target.metric_base
        M = A * np.outer(s, s)
        M[np.diag_indices(n)] += 1.0
        La = cholesky(M)
        V = solve_lower(La.L, row_scale(A, s))
        Ginv = A - V.T @ V
        log_det_G = log_det_a_inv + La.log_det
    Ginv = 0.5 * (Ginv + Ginv.T)
    return MetricState(L=ev.L, gradL=ev.gradL, Ginv=Ginv, log_det_G=log_det_G, dg=d.dg)


def hamiltonian_and_gradient(state: MetricState, p: np.ndarray) -> HamiltonianEval:
    """``H = p^T G^-1 p / 2 + log|G| / 2 - L`` and its position gradient.

    ``dG/dx_n`` has a single non-zero entry at (n, n), so the trace and the
    quadratic form in the gradient collapse to elementwise products.
    The constant ``N/2 log 2 pi`` is dropped.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != state.gradL.shape:
        raise ValueError(f"momentum has shape {p.shape}, expected {state.gradL.shape}")
    w = state.Ginv @ p
    H = 0.5 * float(p @ w) + 0.5 * state.log_det_G - state.L
    grad = 0.5 * state.dg * np.diag(state.Ginv) - 0.5 * w * w * state.dg - state.gradL
    return HamiltonianEval(H=H, gradHx=grad)
