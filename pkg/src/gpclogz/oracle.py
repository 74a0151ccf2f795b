"""Exact log Z for N <= 3 as a Gaussian orthant probability.

Integrating x out of the augmented model leaves ``z ~ N(0, K + I)`` with the
labels constraining the signs of z, so ``Z = P(y_n z_n >= 0 for all n)``.
Flipping signs and rescaling reduces this to an orthant probability of a
correlation matrix, evaluated here by adaptive quadrature over at most two
variables with the last coordinate integrated in closed form.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from . import probit

MAX_N = 3


def _correlation(K, y) -> np.ndarray:
    S = np.asarray(K, dtype=float) + np.eye(len(y))
    S = S * np.outer(y, y)
    d = 1.0 / np.sqrt(np.diag(S))
    return S * np.outer(d, d)


def orthant_quadrature(R) -> float:
    """``P(w >= 0)`` for ``w ~ N(0, R)``, R a correlation matrix of order 1 to 3."""
    R = np.asarray(R, dtype=float)
    n = R.shape[0]
    if n == 1:
        return 0.5
    if n == 2:
        rho = R[0, 1]
        s = math.sqrt(1.0 - rho * rho)
        f = lambda a: math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi) * ndtr(rho * a / s)  # noqa: E731
        val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-14, epsrel=1e-12)
        return val
    if n == 3:
        R12 = R[:2, :2]
        c = R[:2, 2]
        coef = np.linalg.solve(R12, c)
        sd = math.sqrt(1.0 - c @ coef)
        Ri = np.linalg.inv(R12)
        norm = 1.0 / (2 * math.pi * math.sqrt(np.linalg.det(R12)))

        def f(b, a):
            q = Ri[0, 0] * a * a + 2 * Ri[0, 1] * a * b + Ri[1, 1] * b * b
            return norm * math.exp(-0.5 * q) * ndtr((coef[0] * a + coef[1] * b) / sd)

        val, _ = integrate.dblquad(f, 0.0, np.inf, 0.0, np.inf, epsabs=1e-13, epsrel=1e-10)
        return val
    raise ValueError(f"quadrature oracle supports N <= {MAX_N}, got {n}")


def orthant_closed_form(R) -> float:
    """Sheppard-type closed forms: 1/2, 1/4 + asin(r)/2pi, 1/8 + sum asin(r_ij)/4pi."""
    R = np.asarray(R, dtype=float)
    n = R.shape[0]
    if n == 1:
        return 0.5
    if n == 2:
        return 0.25 + math.asin(R[0, 1]) / (2 * math.pi)
    if n == 3:
        s = math.asin(R[0, 1]) + math.asin(R[0, 2]) + math.asin(R[1, 2])
        return 0.125 + s / (4 * math.pi)
    raise ValueError(f"closed form supports N <= {MAX_N}, got {n}")


def exact_log_z(K, y, method: str = "quadrature") -> float:
    """Reference log Z of the probit GP model with kernel matrix K and labels y."""
    y = probit.check_labels(y)
    if y.shape[0] > MAX_N:
        raise ValueError(f"exact log Z is only available for N <= {MAX_N}")
    R = _correlation(K, y)
    if method == "quadrature":
        return math.log(orthant_quadrature(R))
    if method == "closed":
        return math.log(orthant_closed_form(R))
    raise ValueError(f"unknown method {method!r}")
