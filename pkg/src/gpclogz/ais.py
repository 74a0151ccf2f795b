"""Annealed importance sampling for log Z over a geometric inverse-temperature grid.

Every tempered density keeps its Gaussian normalising constants, so the
reference at beta = 0 has unit mass and the mean importance weight estimates
Z directly with no endpoint correction.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .ep import EpApprox, reference_target
from .linalg import NotPositiveDefinite
from .mcmc import HmcConfig, RmhmcConfig
from .target import TemperedTarget
from .weights import ess as _ess
from .weights import log_mean_exp

log = logging.getLogger(__name__)

KERNELS = ("hmc", "rmhmc")
REFERENCES = ("prior", "ep_q")


@dataclass(frozen=True)
class AisConfig:
    b_count: int = 100
    beta_min: float = 1e-4
    runs: int = 100
    kernel: str = "rmhmc"
    kernel_cfg: HmcConfig | RmhmcConfig = field(default_factory=RmhmcConfig)
    anneal_from: str = "ep_q"

    def __post_init__(self):
        if self.b_count < 2:
            raise ValueError("b_count must be at least 2")
        if not 0.0 < self.beta_min < 1.0:
            raise ValueError("beta_min must lie in (0, 1)")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        if self.anneal_from not in REFERENCES:
            raise ValueError(f"anneal_from must be one of {REFERENCES}")
        want = HmcConfig if self.kernel == "hmc" else RmhmcConfig
        if not isinstance(self.kernel_cfg, want):
            raise TypeError(f"kernel {self.kernel!r} needs a {want.__name__}")


@dataclass(frozen=True, eq=False)
class AisResult:
    log_z: float
    log_weights: np.ndarray
    ess: float
    per_beta_accept: np.ndarray

    @property
    def n_failed(self) -> int:
        return int(np.sum(~np.isfinite(self.log_weights)))


def geometric_grid(b_count: int, beta_min: float) -> np.ndarray:
    """``(0, beta_min, ..., 1)``: B points spaced geometrically after a leading zero."""
    if int(b_count) != b_count or b_count < 2:
        raise ValueError("b_count must be an integer >= 2")
    if not 0.0 < beta_min < 1.0:
        raise ValueError("beta_min must lie in (0, 1)")
    b = np.arange(1, b_count + 1)
    grid = np.empty(b_count + 1)
    grid[0] = 0.0
    grid[1:] = beta_min ** ((b_count - b) / (b_count - 1))
    grid[-1] = 1.0
    return grid


def base_target(y, K, anneal_from: str, approx: EpApprox | None = None) -> TemperedTarget:
    """Tempered family at beta = 0 for the requested reference."""
    if anneal_from == "prior":
        return TemperedTarget.from_prior(y, K, beta=0.0)
    if approx is None:
        raise ValueError("annealing from ep_q needs a fitted EP approximation")
    return reference_target(y, K, approx, beta=0.0)


def _draw_reference(target: TemperedTarget, rng) -> np.ndarray:
    return target.mu + target.chol_sigma.L @ rng.standard_normal(target.n)


def _one_run(targets, cfg: AisConfig, seed: int, run_index: int, backend):
    rng = np.random.default_rng([int(seed), int(run_index)])
    ref = targets[0]
    n = ref.n
    ws = kernels.get_backend(backend).Workspace(n)
    x = _draw_reference(ref, rng)
    kc = cfg.kernel_cfg
    mass = kc.mass(n) if cfg.kernel == "hmc" else None
    accepts = np.zeros(len(targets) - 1, dtype=bool)
    log_w = 0.0
    prev_beta = 0.0
    for b, tgt in enumerate(targets[1:]):
        loglik, log_prior, log_q = ws.log_parts(ref, x)
        log_w += (tgt.beta - prev_beta) * (loglik + log_prior - log_q)
        prev_beta = tgt.beta
        if not math.isfinite(log_w):
            log.warning("run %d: non-finite log weight at grid point %d", run_index, b + 1)
            return -math.inf, accepts
        noise = rng.standard_normal(n)
        u = rng.random()
        try:
            if cfg.kernel == "hmc":
                x, acc, _ = ws.hmc_step(tgt, x, noise, u, kc.epsilon, kc.l_max, mass)
            else:
                x, acc, _ = ws.rmhmc_step(tgt, x, noise, u, kc.epsilon, kc.l_max, kc.f_max)
        except (NotPositiveDefinite, FloatingPointError, ValueError):
            acc = False
        accepts[b] = acc
    return log_w, accepts


def ais_estimate(target_family: TemperedTarget, cfg: AisConfig, rng_seed=0, threads: int = 1,
                 backend: str | None = None) -> AisResult:
    """Run ``cfg.runs`` independent annealing runs and average their weights.

    ``target_family`` fixes data, prior and reference; its own beta is
    ignored. Each run draws ``x ~ p_0`` exactly, then at every grid point adds
    ``L_b(x) - L_{b-1}(x)`` to its log weight before one MH proposal of the
    configured kernel targeting ``p_b``. Run ``r`` uses the stream
    ``(rng_seed, r)``, so results do not depend on ``threads``.
    """
    grid = geometric_grid(cfg.b_count, cfg.beta_min)
    base = target_family.with_beta(0.0)
    targets = [base] + [base.with_beta(b) for b in grid[1:]]
    for t in targets[1:]:
        t.packed  # noqa: B018  factor per-beta metric bases before the workers start

    def work(r):
        return _one_run(targets, cfg, rng_seed, r, backend)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(cfg.runs)))
    else:
        results = [work(r) for r in range(cfg.runs)]

    log_weights = np.array([r[0] for r in results])
    accept = np.mean(np.stack([r[1] for r in results]), axis=0)
    if np.all(log_weights == -math.inf):
        log.error("every AIS run failed")
        return AisResult(-math.inf, log_weights, 0.0, accept)
    return AisResult(
        log_z=log_mean_exp(log_weights),
        log_weights=log_weights,
        ess=_ess(log_weights),
        per_beta_accept=accept,
    )


def ais_for_data(y, K, cfg: AisConfig, rng_seed=0, approx: EpApprox | None = None,
                 threads: int = 1, backend: str | None = None) -> AisResult:
    """Build the tempered family for ``cfg.anneal_from`` and run :func:`ais_estimate`."""
    return ais_estimate(base_target(y, K, cfg.anneal_from, approx), cfg, rng_seed, threads, backend)


__all__ = [
    "AisConfig", "AisResult", "ais_estimate", "ais_for_data", "base_target",
    "geometric_grid", "log_mean_exp",
]
