"""Probit log-likelihood with stable first, second and third derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx

LOG_2PI = float(np.log(2.0 * np.pi))
_SQRT2 = float(np.sqrt(2.0))
_LOG_HALF = float(np.log(0.5))

# z at or below which the gradient switches to the tail expansion of N(z)/Phi(z)
ASYMPTOTIC_THRESHOLD = -15.0


@dataclass(frozen=True)
class ProbitDerivs:
    loglik: float
    grad: np.ndarray
    lam: np.ndarray
    dg: np.ndarray


def log_ndtr(z):
    """log Phi(z), accurate in both tails.

    For z < 0 the scaled complementary error function carries the Gaussian
    factor, ``Phi(z) = erfcx(-z/sqrt2) exp(-z^2/2) / 2``, so nothing underflows.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    neg = z < 0
    zn = z[neg]
    out[neg] = np.log(erfcx(-zn / _SQRT2)) + _LOG_HALF - 0.5 * zn * zn
    out[~neg] = np.log1p(-0.5 * erfc(z[~neg] / _SQRT2))
    return out if out.ndim else float(out)


def ratio_log(z):
    """``r = log(N(z; 0, 1) / Phi(z))``.

    For z < 0 the Gaussian exponent cancels analytically against the one in
    ``log_ndtr``.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    neg = z < 0
    out[neg] = -0.5 * LOG_2PI - _LOG_HALF - np.log(erfcx(-z[neg] / _SQRT2))
    zp = z[~neg]
    out[~neg] = -0.5 * zp * zp - 0.5 * LOG_2PI - np.log1p(-0.5 * erfc(zp / _SQRT2))
    return out if out.ndim else float(out)


def asymptotic_ratio(z):
    """Leading terms of N(z)/Phi(z) as z -> -inf."""
    z = np.asarray(z, dtype=float)
    return -z - 1.0 / z + 2.0 / z**3


def check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or not np.all((y == 1.0) | (y == -1.0)):
        raise ValueError("labels must be a vector of +1/-1")
    return y


def grad_loglik(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = y * x
    e = np.empty_like(z)
    normal = z > ASYMPTOTIC_THRESHOLD
    e[normal] = np.exp(ratio_log(z[normal]))
    e[~normal] = asymptotic_ratio(z[~normal])
    return y * e


def derivs(x, y, beta: float) -> ProbitDerivs:
    """Log-likelihood, gradient, tempered negative curvature and its derivative.

    ``lam`` and ``dg`` are multiplied by ``beta``; ``loglik`` and ``grad`` are not.
    """
    x = np.asarray(x, dtype=float)
    y = check_labels(y)
    if x.shape != y.shape:
        raise ValueError(f"x has shape {x.shape} but y has shape {y.shape}")
    z = y * x
    e = np.exp(ratio_log(z))
    e2 = e * e
    lam = beta * (z * e + e2)
    dg = beta * (y * (1.0 - x * x) * e - 3.0 * x * e2 - 2.0 * y * e2 * e)
    return ProbitDerivs(
        loglik=float(np.sum(log_ndtr(z))),
        grad=grad_loglik(x, y),
        lam=lam,
        dg=dg,
    )
