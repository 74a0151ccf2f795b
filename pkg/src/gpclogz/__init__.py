"""Marginal likelihood estimation for Gaussian-process probit classification.

EP, annealed importance sampling with HMC or Riemannian-manifold HMC moves,
and resample-move SMC on the augmented z-representation, with exact
orthant-probability references for tiny problems.
"""

from .ais import AisConfig, AisResult, ais_estimate, ais_for_data, geometric_grid, log_mean_exp
from .ep import EpApprox, ep_fit, ep_reference, reference_target
from .kernels import BACKEND
from .linalg import CholFactor, KernelSpec, NotPositiveDefinite, build_kernel, cholesky
from .mcmc import HmcConfig, RmhmcConfig, hmc_chain, rmhmc_chain
from .oracle import exact_log_z
from .smc import ParticleCollapse, RmConfig, rm_estimate
from .target import TemperedTarget

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AisConfig", "AisResult", "CholFactor", "EpApprox", "HmcConfig", "KernelSpec",
    "NotPositiveDefinite", "ParticleCollapse", "RmConfig", "RmhmcConfig", "TemperedTarget",
    "ais_estimate", "ais_for_data", "build_kernel", "cholesky", "ep_fit", "ep_reference",
    "exact_log_z", "geometric_grid", "hmc_chain", "log_mean_exp", "reference_target",
    "rm_estimate", "rmhmc_chain",
]
