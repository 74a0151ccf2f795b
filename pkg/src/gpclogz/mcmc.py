"""Transition kernels: HMC, Riemannian-manifold HMC, and truncated-Gaussian Gibbs on z.

The integrators and the per-particle Gibbs loop run in :mod:`gpclogz.kernels`;
this module owns configuration, random streams and chain bookkeeping.
Momentum noise and the accept uniform are drawn here, so a chain's output is
a deterministic function of its seed whichever kernel backend runs it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .linalg import NotPositiveDefinite, cholesky, cho_solve
from .target import TemperedTarget


@dataclass(frozen=True)
class HmcConfig:
    epsilon: float
    l_max: int
    mass_diag: np.ndarray | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.l_max < 1:
            raise ValueError("l_max must be at least 1")
        if self.mass_diag is not None and np.any(np.asarray(self.mass_diag) <= 0):
            raise ValueError("mass_diag must be positive")

    def mass(self, n: int) -> np.ndarray:
        if self.mass_diag is None:
            return np.ones(n)
        m = np.asarray(self.mass_diag, dtype=float)
        return np.broadcast_to(m, (n,)).copy()


@dataclass(frozen=True)
class RmhmcConfig:
    epsilon: float = 0.1
    l_max: int = 10
    f_max: int = 5

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.l_max < 1 or self.f_max < 1:
            raise ValueError("l_max and f_max must be at least 1")


@dataclass(frozen=True, eq=False)
class ChainOutput:
    samples: np.ndarray
    energies: np.ndarray
    accept_rate: float


@dataclass(eq=False)
class GibbsState:
    """Current z and the precision ``P = (K + I)^-1`` of its Gaussian prior."""

    z: np.ndarray
    precision: np.ndarray
    precision_diag: np.ndarray

    @classmethod
    def from_kernel(cls, K, z0=None) -> GibbsState:
        K = np.asarray(K, dtype=float)
        n = K.shape[0]
        C = cholesky(K + np.eye(n))
        P = cho_solve(C, np.eye(n))
        P = 0.5 * (P + P.T)
        z = np.zeros(n) if z0 is None else np.array(z0, dtype=float)
        return cls(z=z, precision=np.ascontiguousarray(P), precision_diag=np.diag(P).copy())


def chain_rng(seed, index: int = 0) -> np.random.Generator:
    """Independent stream for chain ``index`` under a master ``seed``."""
    return np.random.default_rng([int(seed), int(index)])


def _run(step, target: TemperedTarget, x0, t_max: int, rng_seed, backend):
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    n = x.shape[0]
    rng = chain_rng(rng_seed)
    ws = kernels.get_backend(backend).Workspace(n)
    samples = np.empty((t_max, n))
    energies = np.empty(t_max)
    accepted = 0
    for t in range(t_max):
        noise = rng.standard_normal(n)
        u = rng.random()
        x, acc, L = step(ws, target, x, noise, u)
        accepted += acc
        samples[t] = x
        energies[t] = -L
    return ChainOutput(samples=samples, energies=energies, accept_rate=accepted / t_max)


def hmc_transition(ws, target, x, cfg: HmcConfig, rng: np.random.Generator):
    """One HMC proposal (momentum refresh, ``l_max`` leapfrog steps, MH test)."""
    n = x.shape[0]
    noise = rng.standard_normal(n)
    return ws.hmc_step(target, x, noise, rng.random(), cfg.epsilon, cfg.l_max, cfg.mass(n))


def rmhmc_transition(ws, target, x, cfg: RmhmcConfig, rng: np.random.Generator):
    """One RMHMC proposal; a failed factorisation mid-trajectory counts as a rejection."""
    noise = rng.standard_normal(x.shape[0])
    return ws.rmhmc_step(target, x, noise, rng.random(), cfg.epsilon, cfg.l_max, cfg.f_max)


def hmc_chain(target: TemperedTarget, x0, cfg: HmcConfig, t_max: int, rng_seed=0,
              backend: str | None = None) -> ChainOutput:
    """Run ``t_max`` HMC iterations with diagonal mass matrix ``cfg.mass_diag``."""
    mass = cfg.mass(len(x0))

    def step(ws, target, x, noise, u):
        return ws.hmc_step(target, x, noise, u, cfg.epsilon, cfg.l_max, mass)

    return _run(step, target, x0, t_max, rng_seed, backend)


def rmhmc_chain(target: TemperedTarget, x0, cfg: RmhmcConfig, t_max: int, rng_seed=0,
                backend: str | None = None) -> ChainOutput:
    """Run ``t_max`` RMHMC iterations with the Hessian metric of ``target``.

    Each iteration draws ``p ~ N(0, G(x))``, takes ``l_max`` generalised
    leapfrog steps with exactly ``f_max`` fixed-point iterations for each
    implicit half-step, and applies a Metropolis test on the full
    non-separable Hamiltonian.
    """

    def step(ws, target, x, noise, u):
        return ws.rmhmc_step(target, x, noise, u, cfg.epsilon, cfg.l_max, cfg.f_max)

    return _run(step, target, x0, t_max, rng_seed, backend)


def leapfrog(target: TemperedTarget, x, p, epsilon: float, n_steps: int, mass_diag=None,
             backend: str | None = None):
    """Stormer-Verlet trajectory for ``H = -L(x) + p^T M^-1 p / 2``; returns ``(x, p)``."""
    x = np.asarray(x, dtype=float)
    mass = np.ones(x.shape[0]) if mass_diag is None else np.asarray(mass_diag, dtype=float)
    ws = kernels.get_backend(backend).Workspace(x.shape[0])
    return ws.leapfrog(target, x, p, epsilon, n_steps, mass)


def generalized_leapfrog(target: TemperedTarget, x, p, epsilon: float, n_steps: int,
                         f_max: int = 5, backend: str | None = None):
    """Generalised leapfrog trajectory for the Riemannian Hamiltonian; returns ``(x, p, H)``."""
    x = np.asarray(x, dtype=float)
    ws = kernels.get_backend(backend).Workspace(x.shape[0])
    return ws.generalized_leapfrog(target, x, p, epsilon, n_steps, f_max)


def sample_truncated_normal(mean, var, sign_constraint, rng: np.random.Generator, size=None):
    """Exact draw(s) from ``N(mean, var)`` restricted to ``sign * z >= 0``.

    Rejection from the untruncated normal when the standardised cutoff is
    small, otherwise rejection from a shifted exponential proposal; no
    inverse CDF is evaluated.
    """
    if np.any(np.asarray(var) <= 0):
        raise ValueError("variance must be positive")
    if size is not None:
        mean = np.broadcast_to(mean, size)
    out = kernels.truncnorm(mean, var, sign_constraint, rng)
    return float(out) if np.ndim(out) == 0 else out


def gibbs_z_sweep(state: GibbsState, y, rng: np.random.Generator, active=None,
                  slice_move: bool = False, backend: str | None = None) -> GibbsState:
    """One systematic-scan sweep ``n = 1..N`` over z.

    ``z_n | z_-n ~ N(-(1/P_nn) sum_{j != n} P_nj z_j, 1/P_nn)``, truncated to
    ``y_n z_n >= 0`` where ``active[n]`` (default: every constraint active).
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    active = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    Z = np.array(state.z, dtype=float).reshape(1, n)
    kernels.get_backend(backend).gibbs_sweeps(Z, state.precision, y, active, 1, rng, slice_move)
    return GibbsState(z=Z[0], precision=state.precision, precision_diag=state.precision_diag)


def gibbs_chain(K, y, t_max: int, rng_seed=0, z0=None, backend: str | None = None):
    """Gibbs chain on the z-representation; returns samples of z (t_max x N).

    The chain starts from ``z0`` or, by default, from ``y`` itself, which
    satisfies every constraint.
    """
    y = np.asarray(y, dtype=float)
    state = GibbsState.from_kernel(K, y.copy() if z0 is None else z0)
    rng = chain_rng(rng_seed)
    out = np.empty((t_max, y.shape[0]))
    for t in range(t_max):
        state = gibbs_z_sweep(state, y, rng, backend=backend)
        out[t] = state.z
    return out


def latent_mean_from_z(K, z_samples) -> np.ndarray:
    """Rao-Blackwellised ``E[x | y]`` from z draws: ``E[x | z] = K (K + I)^-1 z``."""
    K = np.asarray(K, dtype=float)
    C = cholesky(K + np.eye(K.shape[0]))
    return K @ cho_solve(C, np.mean(z_samples, axis=0))


__all__ = [
    "ChainOutput", "GibbsState", "HmcConfig", "NotPositiveDefinite", "RmhmcConfig",
    "chain_rng", "generalized_leapfrog", "gibbs_chain", "gibbs_z_sweep", "hmc_chain",
    "hmc_transition", "latent_mean_from_z", "leapfrog", "rmhmc_chain", "rmhmc_transition",
    "sample_truncated_normal",
]
