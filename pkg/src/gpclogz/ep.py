"""Expectation propagation for probit GP classification.

Sequential site updates in index order with damping, following the standard
scheme for probit likelihoods. The fitted approximation has precision
``Sigma^-1 = K^-1 + diag(site_precision)`` and is used both as a reference
distribution for annealing and for its own estimate of log Z.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import probit
from .linalg import CholFactor, cholesky, woodbury_inverse
from .target import TemperedTarget

log = logging.getLogger(__name__)

DAMPING = 0.8
DAMPING_FLOOR = 0.1


class EpError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EpApprox:
    """Converged (or last) EP state.

    ``sigma_tilde`` holds the site variances ``1 / tau_tilde`` and
    ``site_means`` the ratios ``nu_tilde / tau_tilde``.
    """

    mu: np.ndarray
    sigma_tilde: np.ndarray
    site_means: np.ndarray
    log_z_ep: float
    iterations: int
    converged: bool
    site_precision: np.ndarray
    site_nu: np.ndarray


@dataclass(frozen=True, eq=False)
class EpReference:
    mu: np.ndarray
    sigma_tilde: np.ndarray
    chol_sigma: CholFactor
    log_det_sigma: float
    Sigma: np.ndarray


def _posterior(K: np.ndarray, tau: np.ndarray, nu: np.ndarray):
    """Recompute Sigma, mu and the Cholesky of ``I + S K S`` from scratch."""
    sw = np.sqrt(tau)
    Sigma, log_det_b = woodbury_inverse(K, sw)
    return Sigma, Sigma @ nu, log_det_b


def _tilted(mu_cav, var_cav, y):
    """Tilted moments of ``Phi(y x) N(x; mu_cav, var_cav)``."""
    denom = np.sqrt(1.0 + var_cav)
    z = y * mu_cav / denom
    ratio = np.exp(probit.ratio_log(z))
    mu_hat = mu_cav + y * var_cav * ratio / denom
    var_hat = var_cav - var_cav**2 * ratio / (1.0 + var_cav) * (z + ratio)
    return z, mu_hat, var_hat


def _log_z(K, tau, nu, Sigma, mu, log_det_b, y) -> float:
    var = np.diag(Sigma)
    tau_cav = 1.0 / var - tau
    nu_cav = mu / var - nu
    z = y * (nu_cav / tau_cav) / np.sqrt(1.0 + 1.0 / tau_cav)
    lz = probit.log_ndtr(z)
    return float(
        -0.5 * log_det_b
        + np.sum(lz)
        + 0.5 * nu @ Sigma @ nu
        + 0.5 * nu_cav @ ((tau / tau_cav * nu_cav - 2.0 * nu) / (tau + tau_cav))
        - 0.5 * np.sum(nu**2 / (tau_cav + tau))
        + 0.5 * np.sum(np.log1p(tau / tau_cav))
    )


def ep_fit(y, K, tol: float = 1e-6, max_sweeps: int = 200) -> EpApprox:
    """Fit site precisions ``tau`` and natural means ``nu`` by damped sequential EP.

    Converged when the largest site-parameter change over a full sweep is
    below ``tol``. A negative cavity variance halves the damping and skips
    that site; reaching the damping floor raises :class:`EpError`.
    """
    y = probit.check_labels(y)
    K = np.asarray(K, dtype=float)
    n = y.shape[0]
    tau = np.zeros(n)
    nu = np.zeros(n)
    Sigma = K.copy()
    mu = np.zeros(n)
    damping = DAMPING
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_change = 0.0
        for i in range(n):
            tau_cav = 1.0 / Sigma[i, i] - tau[i]
            if tau_cav <= 0:
                if damping <= DAMPING_FLOOR:
                    raise EpError(f"negative cavity variance at site {i} with damping at floor")
                damping = max(DAMPING_FLOOR, 0.5 * damping)
                log.warning("negative cavity variance at site %d; damping -> %g", i, damping)
                continue
            nu_cav = mu[i] / Sigma[i, i] - nu[i]
            _, mu_hat, var_hat = _tilted(nu_cav / tau_cav, 1.0 / tau_cav, y[i])
            tau_new = max(1.0 / var_hat - tau_cav, 0.0)
            nu_new = mu_hat / var_hat - nu_cav
            d_tau = damping * (tau_new - tau[i])
            d_nu = damping * (nu_new - nu[i])
            max_change = max(max_change, abs(d_tau), abs(d_nu))
            tau[i] += d_tau
            nu[i] += d_nu
            # rank-one update of Sigma; refreshed from scratch after each sweep
            si = Sigma[:, i].copy()
            denom = 1.0 / d_tau + si[i] if d_tau != 0 else np.inf
            Sigma -= np.outer(si, si) / denom
            mu = Sigma @ nu
        Sigma, mu, _ = _posterior(K, tau, nu)
        if max_change < tol:
            converged = True
            break
    Sigma, mu, log_det_b = _posterior(K, tau, nu)
    if not converged:
        log.warning("EP did not converge in %d sweeps", max_sweeps)
    with np.errstate(divide="ignore"):
        sigma_tilde = 1.0 / tau
    return EpApprox(
        mu=mu,
        sigma_tilde=sigma_tilde,
        site_means=nu * sigma_tilde,
        log_z_ep=_log_z(K, tau, nu, Sigma, mu, log_det_b, y),
        iterations=sweeps,
        converged=converged,
        site_precision=tau.copy(),
        site_nu=nu.copy(),
    )


def ep_reference(approx: EpApprox, K) -> EpReference:
    """Reference Gaussian ``q = N(mu, Sigma)`` with ``Sigma^-1 = K^-1 + Sigma_tilde^-1``.

    ``log|Sigma| = log|K| - log|I + T K T|`` with ``T = Sigma_tilde^-1/2``.
    """
    if np.any(approx.sigma_tilde <= 0):
        raise ValueError("site variances must be positive")
    K = np.asarray(K, dtype=float)
    t = 1.0 / np.sqrt(approx.sigma_tilde)
    Sigma, log_det_it = woodbury_inverse(K, t)
    chol_k = cholesky(K)
    return EpReference(
        mu=approx.mu,
        sigma_tilde=approx.sigma_tilde,
        chol_sigma=cholesky(Sigma),
        log_det_sigma=chol_k.log_det - log_det_it,
        Sigma=Sigma,
    )


def reference_target(y, K, approx: EpApprox, beta: float = 0.0) -> TemperedTarget:
    """Tempered target annealing from the EP approximation."""
    ref = ep_reference(approx, K)
    # log|Sigma| from the Woodbury identity is kept in the factor so that the
    # normalising constant and the factor agree
    chol_sigma = CholFactor(L=ref.chol_sigma.L, log_det=ref.log_det_sigma)
    return TemperedTarget.from_reference(y, K, ref.mu, ref.sigma_tilde, chol_sigma, beta=beta)


def moment_residuals(approx: EpApprox, y, K) -> np.ndarray:
    """Per-site |mean| and |variance| mismatch between q's marginal and the tilted moments."""
    y = probit.check_labels(y)
    tau, nu = approx.site_precision, approx.site_nu
    Sigma, mu, _ = _posterior(np.asarray(K, dtype=float), tau, nu)
    var = np.diag(Sigma)
    tau_cav = 1.0 / var - tau
    nu_cav = mu / var - nu
    _, mu_hat, var_hat = _tilted(nu_cav / tau_cav, 1.0 / tau_cav, y)
    return np.column_stack([np.abs(mu_hat - mu), np.abs(var_hat - var)])


def cavity_moments(approx: EpApprox, K):
    """Cavity means and variances at the current site parameters."""
    Sigma, mu, _ = _posterior(np.asarray(K, dtype=float), approx.site_precision, approx.site_nu)
    var = np.diag(Sigma)
    tau_cav = 1.0 / var - approx.site_precision
    nu_cav = mu / var - approx.site_nu
    return nu_cav / tau_cav, 1.0 / tau_cav

