"""Resample-move SMC for log Z on the z-representation.

Particles start from ``z ~ N(0, K + I)``. Label constraints ``y_n z_n >= 0``
are switched on one at a time; each introduction multiplies every weight by
a 0/1 indicator and contributes the log of the weighted surviving fraction to
log Z. When the effective sample size falls below ``threshold * R`` the
particles are residual-resampled and then rejuvenated with Gibbs sweeps that
respect the constraints introduced so far.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels, probit
from .linalg import cho_solve, cholesky
from .weights import ParticleCollapse, ess, normalized_weights

log = logging.getLogger(__name__)

# particles per random stream in a move step; fixed so results ignore the thread count
CHUNK = 512
# guards floor(R * w) against weights like 0.3 landing at 2.9999999999999996 / 10
_COUNT_EPS = 1e-9

ORDERS = ("index", "random")


@dataclass(frozen=True)
class RmConfig:
    r_particles: int = 1000
    resample_threshold: float = 0.9
    sweeps_per_move: int = 2
    rng_seed: int = 0
    order: str = "index"
    slice_move: bool = False

    def __post_init__(self):
        if self.r_particles < 2:
            raise ValueError("r_particles must be at least 2")
        if not 0.0 < self.resample_threshold <= 1.0:
            raise ValueError("resample_threshold must lie in (0, 1]")
        if self.sweeps_per_move < 0:
            raise ValueError("sweeps_per_move must be non-negative")
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}")


@dataclass(eq=False)
class ParticleSystem:
    particles: np.ndarray
    log_weights: np.ndarray
    constraints_active: int = 0
    log_z_partial: float = 0.0

    @property
    def r(self) -> int:
        return self.particles.shape[0]


@dataclass(eq=False)
class RmDiagnostics:
    order: np.ndarray
    ess: list = field(default_factory=list)
    survivors: list = field(default_factory=list)
    resampled_at: list = field(default_factory=list)
    log_increments: list = field(default_factory=list)

    @property
    def n_resamples(self) -> int:
        return len(self.resampled_at)


def residual_resample(log_weights, rng: np.random.Generator) -> np.ndarray:
    """Parent indices: ``floor(R w_r)`` copies of each r, the rest multinomial on the residuals."""
    w = normalized_weights(log_weights)
    R = w.shape[0]
    rw = R * w
    counts = np.floor(rw + _COUNT_EPS).astype(np.int64)
    n_left = R - int(counts.sum())
    if n_left > 0:
        resid = np.maximum(rw - counts, 0.0)
        counts += rng.multinomial(n_left, resid / resid.sum())
    elif n_left < 0:  # rounding pushed the total over R; trim the largest
        for _ in range(-n_left):
            counts[np.argmax(counts)] -= 1
    return np.repeat(np.arange(R), counts)


def _move(Z, P, y, active, sweeps, seed, epoch, slice_move, threads, backend):
    mod = kernels.get_backend(backend)
    R = Z.shape[0]
    starts = list(range(0, R, CHUNK))

    def work(ci):
        a = starts[ci]
        rng = np.random.default_rng([int(seed), 1, epoch, ci])
        mod.gibbs_sweeps(Z[a:a + CHUNK], P, y, active, sweeps, rng, slice_move)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(starts))))
    else:
        for ci in range(len(starts)):
            work(ci)


def _check_constraints(Z, y, active, log_weights, k):
    alive = log_weights > -np.inf
    bad = (Z[np.ix_(alive, active)] * y[active]) < 0
    if np.any(bad):
        raise RuntimeError(f"active constraint violated by a live particle after step {k}")


def rm_estimate(y, K, cfg: RmConfig, threads: int = 1, backend: str | None = None):
    """Estimate log Z by sequential constraint introduction; returns ``(log_z, diagnostics)``.

    Raises :class:`ParticleCollapse` when no particle survives an introduction.
    """
    y = probit.check_labels(y)
    K = np.asarray(K, dtype=float)
    n = y.shape[0]
    R = cfg.r_particles
    seed = cfg.rng_seed

    C = cholesky(K + np.eye(n))
    P = cho_solve(C, np.eye(n))
    P = np.ascontiguousarray(0.5 * (P + P.T))

    order = np.arange(n)
    if cfg.order == "random":
        order = np.random.default_rng([int(seed), 3]).permutation(n)
    # reorder the problem so constraints are introduced left to right
    y_o = np.ascontiguousarray(y[order])
    P_o = np.ascontiguousarray(P[np.ix_(order, order)])

    init_rng = np.random.default_rng([int(seed), 0])
    Z = init_rng.standard_normal((R, n)) @ C.L.T
    Z = np.ascontiguousarray(Z[:, order])
    ps = ParticleSystem(particles=Z, log_weights=np.zeros(R))
    diag = RmDiagnostics(order=order)
    active = np.zeros(n, dtype=bool)
    epoch = 0

    for k in range(n):
        ok = y_o[k] * ps.particles[:, k] >= 0
        w = normalized_weights(ps.log_weights)
        frac = float(np.sum(w[ok]))
        if frac == 0.0:
            raise ParticleCollapse("no particle satisfies the new constraint", k=k + 1)
        ps.log_weights = np.where(ok, ps.log_weights, -np.inf)
        ps.log_z_partial += math.log(frac)
        ps.constraints_active = k + 1
        active[k] = True
        e = ess(ps.log_weights)
        diag.ess.append(e)
        diag.survivors.append(int(np.count_nonzero(ps.log_weights > -np.inf)))
        diag.log_increments.append(math.log(frac))

        if e < cfg.resample_threshold * R:
            epoch += 1
            rs_rng = np.random.default_rng([int(seed), 2, epoch])
            parents = residual_resample(ps.log_weights, rs_rng)
            ps.particles = np.ascontiguousarray(ps.particles[parents])
            ps.log_weights = np.zeros(R)
            diag.resampled_at.append(k + 1)
            if cfg.sweeps_per_move:
                _move(ps.particles, P_o, y_o, active, cfg.sweeps_per_move, seed, epoch,
                      cfg.slice_move, threads, backend)
            _check_constraints(ps.particles, y_o, active, ps.log_weights, k + 1)

    log.debug("rm: %d resamples, log Z %.6f", diag.n_resamples, ps.log_z_partial)
    return ps.log_z_partial, diag


__all__ = [
    "ParticleCollapse", "ParticleSystem", "RmConfig", "RmDiagnostics", "ess",
    "residual_resample", "rm_estimate",
]
