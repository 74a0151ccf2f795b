"""Log-weight reductions shared by the importance-sampling estimators."""

from __future__ import annotations

import math

import numpy as np


class ParticleCollapse(RuntimeError):
    """Every weight is zero; ``k`` is the constraint (or grid point) where it happened."""

    def __init__(self, message: str = "all particle weights are zero", k: int | None = None):
        super().__init__(message if k is None else f"{message} (at step {k})")
        self.k = k


def log_mean_exp(v) -> float:
    """``log(mean(exp(v)))`` with a max shift; ``-inf`` entries are allowed."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("log_mean_exp of an empty vector")
    if np.any(np.isnan(v)):
        raise ValueError("log_mean_exp got NaN")
    m = float(np.max(v))
    if m == -math.inf:
        return -math.inf
    if m == math.inf:
        return math.inf
    return m + math.log(float(np.sum(np.exp(v - m)))) - math.log(v.size)


def normalized_weights(log_weights) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    m = np.max(lw) if lw.size else -np.inf
    if not np.isfinite(m):
        raise ParticleCollapse()
    w = np.exp(lw - m)
    return w / np.sum(w)


def ess(log_weights) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2``; lies in ``[1, R]``."""
    w = normalized_weights(log_weights)
    return float(1.0 / np.sum(w * w))
