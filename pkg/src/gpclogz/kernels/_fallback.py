"""Pure-Python reference kernels.

Same API as the compiled ``_core`` module. Integrators are built directly on
:mod:`gpclogz.target`; the Gibbs sweep is vectorised across particles
instead of looping particle by particle, so its random stream differs from
the compiled one while sampling the same distribution.
"""

from __future__ import annotations

import numpy as np

from ..linalg import NotPositiveDefinite, cholesky, solve_upper
from ..target import TemperedTarget, derivatives, hamiltonian_and_gradient, riemann_metric

BACKEND = "python"

# below this standardised cutoff plain normal rejection beats the exponential proposal
TAIL_SWITCH = 0.257


def truncnorm(mean, var, sign, rng: np.random.Generator) -> np.ndarray:
    """Draw ``z ~ N(mean, var)`` restricted to ``sign * z >= 0``, elementwise."""
    mean, var, sign = np.broadcast_arrays(
        np.asarray(mean, dtype=float), np.asarray(var, dtype=float), np.asarray(sign, dtype=float)
    )
    shape = mean.shape
    mean, var, sign = mean.ravel(), var.ravel(), sign.ravel()
    sd = np.sqrt(var)
    a = -sign * mean / sd
    w = np.empty_like(a)

    idx = np.flatnonzero(a < TAIL_SWITCH)
    while idx.size:
        draw = rng.standard_normal(idx.size)
        ok = draw >= a[idx]
        w[idx[ok]] = draw[ok]
        idx = idx[~ok]

    idx = np.flatnonzero(a >= TAIL_SWITCH)
    while idx.size:
        ai = a[idx]
        alpha = 0.5 * (ai + np.sqrt(ai * ai + 4.0))
        prop = ai + rng.standard_exponential(idx.size) / alpha
        ok = rng.random(idx.size) <= np.exp(-0.5 * (prop - alpha) ** 2)
        w[idx[ok]] = prop[ok]
        idx = idx[~ok]

    v = np.maximum(sign * mean + sd * w, 0.0)
    return (sign * v).reshape(shape)


def _slice_update(current, mean, var, sign, rng):
    height = 0.5 * (current - mean) ** 2 / var + rng.standard_exponential(current.shape)
    half = np.sqrt(2.0 * var * height)
    lo, hi = mean - half, mean + half
    if sign > 0:
        lo = np.maximum(lo, 0.0)
    else:
        hi = np.minimum(hi, 0.0)
    return lo + (hi - lo) * rng.random(current.shape)


def gibbs_sweeps(Z, P, y, active, n_sweeps: int, rng, slice_move: bool = False) -> None:
    """In-place systematic-scan Gibbs sweeps over every row of ``Z``.

    Coordinate n is drawn from its Gaussian conditional under precision P,
    truncated to ``y_n z_n >= 0`` when ``active[n]``.
    """
    R, n = Z.shape
    for _ in range(n_sweeps):
        for i in range(n):
            pii = P[i, i]
            var = 1.0 / pii
            m = -(Z @ P[i] - pii * Z[:, i]) * var
            if not active[i]:
                Z[:, i] = m + np.sqrt(var) * rng.standard_normal(R)
            elif slice_move:
                Z[:, i] = _slice_update(Z[:, i], m, var, y[i], rng)
            else:
                Z[:, i] = truncnorm(m, var, y[i], rng)


def _finite(*vals) -> bool:
    return all(np.all(np.isfinite(v)) for v in vals)


class Workspace:
    """Per-chain scratch state; stateless here, buffers live in the compiled twin."""

    def __init__(self, n: int):
        self.n = n

    def log_parts(self, target: TemperedTarget, x):
        return target.log_parts(x)

    def derivatives(self, target: TemperedTarget, x):
        ev = derivatives(target, x)
        return ev.L, ev.gradL

    def metric(self, target: TemperedTarget, x):
        st = riemann_metric(target, x)
        return st.L, st.gradL, st.Ginv, st.log_det_G, st.dg

    def leapfrog(self, target, x, p, eps: float, n_steps: int, mass_diag):
        x = np.array(x, dtype=float)
        p = np.array(p, dtype=float)
        _, grad = self.derivatives(target, x)
        for _ in range(n_steps):
            p = p + 0.5 * eps * grad
            x = x + eps * p / mass_diag
            _, grad = self.derivatives(target, x)
            p = p + 0.5 * eps * grad
        return x, p

    def hmc_step(self, target, x, noise, u: float, eps: float, l_max: int, mass_diag):
        x0 = np.array(x, dtype=float)
        p = np.sqrt(mass_diag) * noise
        L0, grad = self.derivatives(target, x0)
        h0 = -L0 + 0.5 * float(np.sum(p * p / mass_diag))
        x = x0
        with np.errstate(all="ignore"):
            for _ in range(l_max):
                p = p + 0.5 * eps * grad
                x = x + eps * p / mass_diag
                L, grad = self.derivatives(target, x)
                p = p + 0.5 * eps * grad
            h1 = -L + 0.5 * float(np.sum(p * p / mass_diag))
        if _finite(h1, x) and u < np.exp(min(h0 - h1, 0.0)):
            return x, True, L
        return x0, False, L0

    def _trajectory(self, target, x, p, eps, n_steps, f_max):
        state = riemann_metric(target, x)
        ham = hamiltonian_and_gradient(state, p)
        for _ in range(n_steps):
            p0 = p
            for _ in range(f_max):
                p = p0 - 0.5 * eps * ham.gradHx
                ham = hamiltonian_and_gradient(state, p)
            dhdp = state.Ginv @ p
            dhdp_new = dhdp
            x0 = x
            for _ in range(f_max):
                x = x0 + 0.5 * eps * (dhdp + dhdp_new)
                state = riemann_metric(target, x)
                dhdp_new = state.Ginv @ p
            ham = hamiltonian_and_gradient(state, p)
            p = p - 0.5 * eps * ham.gradHx
            ham = hamiltonian_and_gradient(state, p)
        return x, p, state, ham.H

    def generalized_leapfrog(self, target, x, p, eps: float, n_steps: int, f_max: int):
        x, p, _, H = self._trajectory(
            target, np.array(x, dtype=float), np.array(p, dtype=float), eps, n_steps, f_max
        )
        return x, p, H

    def rmhmc_step(self, target, x, noise, u: float, eps: float, l_max: int, f_max: int):
        x0 = np.array(x, dtype=float)
        state = riemann_metric(target, x0)
        # p ~ N(0, G): L^-T n with L L^T = G^-1
        p = solve_upper(cholesky(state.Ginv).L, np.asarray(noise, dtype=float))
        h_old = hamiltonian_and_gradient(state, p).H
        try:
            with np.errstate(all="ignore"):
                x, _, _, h = self._trajectory(target, x0, p, eps, l_max, f_max)
                new_state = derivatives(target, x)
        except (NotPositiveDefinite, ValueError, FloatingPointError):
            return x0, False, state.L
        if _finite(h, x) and u < np.exp(min(h_old - h, 0.0)):
            return x, True, new_state.L
        return x0, False, state.L
