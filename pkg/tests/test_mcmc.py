import math

import mpmath
import numpy as np
import pytest
from scipy import stats

from conftest import K2, Y2, prior_target, random_problem
from gpclogz import kernels
from gpclogz.data import synthetic
from gpclogz.ep import ep_fit, reference_target
from gpclogz.linalg import CholFactor, KernelSpec, build_kernel, cholesky
from gpclogz.mcmc import (
    GibbsState, HmcConfig, RmhmcConfig, generalized_leapfrog, gibbs_chain, gibbs_z_sweep,
    hmc_chain, latent_mean_from_z, leapfrog, rmhmc_chain, sample_truncated_normal,
)
from gpclogz.target import TemperedTarget, riemann_metric

BACKENDS = ["python"] + (["cython"] if kernels.compiled is not None else [])


def gaussian_target(S, mu=None):
    """beta = 0 target whose density is exactly N(mu, S)."""
    n = S.shape[0]
    mu = np.zeros(n) if mu is None else mu
    # pick site variances c and a prior K with (K^-1 + I/c)^-1 = S
    c = 4.0 * np.max(np.linalg.eigvalsh(S))
    K = np.linalg.inv(np.linalg.inv(S) - np.eye(n) / c)
    K = 0.5 * (K + K.T)
    return TemperedTarget.from_reference(np.ones(n), K, mu, np.full(n, c), cholesky(S), beta=0.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_hand_leapfrog(backend):
    t = gaussian_target(np.eye(1))
    x, p = leapfrog(t, np.array([1.0]), np.array([0.0]), 0.1, 1, backend=backend)
    assert abs(x[0] - 0.995) <= 1e-15 and abs(p[0] + 0.09975) <= 1e-15


def test_tiny_step_always_accepts():
    t = gaussian_target(np.array([[1.0, 0.3], [0.3, 2.0]]))
    out = hmc_chain(t, np.zeros(2), HmcConfig(1e-6, 1), 1000, rng_seed=1)
    assert out.accept_rate > 0.999


def test_hmc_recovers_covariance():
    S = np.array([[1.0, 0.6], [0.6, 2.0]])
    out = hmc_chain(gaussian_target(S), np.zeros(2), HmcConfig(0.45, 7), 51000, rng_seed=3)
    C = np.cov(out.samples[1000:].T)
    assert np.max(np.abs(C - S) / np.abs(S)) < 0.05


@pytest.mark.parametrize("backend", BACKENDS)
def test_rmhmc_reduces_to_leapfrog_at_beta_zero(backend):
    y = np.array([1.0, -1.0, 1.0])
    K = np.diag([0.5, 2.0, 1.5])
    t = TemperedTarget.from_prior(y, K, beta=0.0)
    G = np.linalg.inv(K)
    rng = np.random.default_rng(5)
    x1 = x2 = rng.standard_normal(3)
    p1 = p2 = rng.standard_normal(3)
    for _ in range(10):
        x1, p1, _ = generalized_leapfrog(t, x1, p1, 0.2, 1, f_max=5, backend=backend)
        x2, p2 = leapfrog(t, x2, p2, 0.2, 1, mass_diag=np.diag(G), backend=backend)
        assert np.max(np.abs(x1 - x2)) < 1e-12 and np.max(np.abs(p1 - p2)) < 1e-12


def test_rmhmc_reduces_to_dense_mass_leapfrog():
    S = np.array([[1.0, 0.5], [0.5, 1.5]])
    t = gaussian_target(S)
    Ginv = S
    x, p = np.array([0.3, -0.4]), np.array([1.0, 0.2])
    xa, pa = x.copy(), p.copy()
    for _ in range(10):
        x, p, _ = generalized_leapfrog(t, x, p, 0.1, 1, f_max=3)
        pa = pa - 0.05 * np.linalg.solve(S, xa)
        xa = xa + 0.1 * Ginv @ pa
        pa = pa - 0.05 * np.linalg.solve(S, xa)
        assert np.max(np.abs(x - xa)) < 1e-12 and np.max(np.abs(p - pa)) < 1e-12


@pytest.mark.parametrize("backend", BACKENDS)
def test_generalized_leapfrog_reversible(backend):
    t = prior_target(10, 21)
    rng = np.random.default_rng(22)
    x0, p0 = rng.standard_normal(10), rng.standard_normal(10)
    x1, p1, _ = generalized_leapfrog(t, x0, p0, 0.1, 5, f_max=100, backend=backend)
    x2, p2, _ = generalized_leapfrog(t, x1, -p1, 0.1, 5, f_max=100, backend=backend)
    assert np.max(np.abs(x2 - x0)) < 1e-5 and np.max(np.abs(-p2 - p0)) < 1e-5


def test_energy_drift_small_step():
    t = prior_target(10, 23)
    x0 = np.random.default_rng(24).standard_normal(10)
    st = riemann_metric(t, x0)
    p0 = np.linalg.solve(np.linalg.cholesky(st.Ginv).T, np.random.default_rng(25).standard_normal(10))
    from gpclogz.target import hamiltonian_and_gradient
    h0 = hamiltonian_and_gradient(st, p0).H
    _, _, h1 = generalized_leapfrog(t, x0, p0, 0.01, 50, f_max=5)
    assert abs(h1 - h0) < 1e-3


@pytest.mark.slow
def test_rmhmc_acceptance_band_n100():
    ds = synthetic(100, 2, 2.0, seed=0)
    K = build_kernel(ds.inputs, KernelSpec(1.0, 2.0))
    a = ep_fit(ds.labels, K)
    t = TemperedTarget.from_prior(ds.labels, K, beta=1.0)
    out = rmhmc_chain(t, a.mu, RmhmcConfig(0.1, 10, 5), 100, rng_seed=0)
    assert 0.6 <= out.accept_rate <= 1.0


def test_chain_determinism():
    t = prior_target(4, 26)
    a = rmhmc_chain(t, np.zeros(4), RmhmcConfig(0.3, 5, 4), 30, rng_seed=9)
    b = rmhmc_chain(t, np.zeros(4), RmhmcConfig(0.3, 5, 4), 30, rng_seed=9)
    assert np.array_equal(a.samples, b.samples) and np.array_equal(a.energies, b.energies)
    c = hmc_chain(t, np.zeros(4), HmcConfig(0.2, 5), 30, rng_seed=9)
    d = hmc_chain(t, np.zeros(4), HmcConfig(0.2, 5), 30, rng_seed=9)
    assert np.array_equal(c.samples, d.samples)


def test_chain_energies_are_negative_log_density():
    from gpclogz.target import derivatives
    t = prior_target(3, 27)
    out = hmc_chain(t, np.zeros(3), HmcConfig(0.2, 5), 20, rng_seed=0)
    for x, e in zip(out.samples, out.energies):
        assert e == pytest.approx(-derivatives(t, x).L, rel=1e-12)


def _batch_se(v, nb=50):
    b = v[: len(v) // nb * nb].reshape(nb, -1).mean(axis=1)
    return b.std(ddof=1) / math.sqrt(nb)


@pytest.mark.slow
def test_samplers_agree_on_posterior_mean():
    t = TemperedTarget.from_prior(Y2, K2, beta=1.0)
    h = hmc_chain(t, np.zeros(2), HmcConfig(0.4, 8), 20000, rng_seed=1).samples[500:]
    r = rmhmc_chain(t, np.zeros(2), RmhmcConfig(0.5, 6, 5), 6000, rng_seed=2).samples[200:]
    z = gibbs_chain(K2, Y2, 40000, rng_seed=3)[500:]
    C = np.linalg.solve(K2 + np.eye(2), K2).T  # E[x|z] = K (K+I)^-1 z
    g = z @ C.T
    means = {"hmc": h.mean(0), "rmhmc": r.mean(0), "gibbs": latent_mean_from_z(K2, z)}
    ses = {"hmc": np.array([_batch_se(h[:, i]) for i in range(2)]),
           "rmhmc": np.array([_batch_se(r[:, i]) for i in range(2)]),
           "gibbs": np.array([_batch_se(g[:, i]) for i in range(2)])}
    names = list(means)
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = names[i], names[j]
            se = np.sqrt(ses[a] ** 2 + ses[b] ** 2)
            assert np.all(np.abs(means[a] - means[b]) < 3 * se), (a, b, means, ses)


def test_gibbs_precision_example():
    st = GibbsState.from_kernel(K2)
    assert np.allclose(st.precision, [[0.5952381, -0.2380952], [-0.2380952, 0.5952381]], atol=1e-7)
    # z1 | z2: mean -(P12/P11) z2 = 0.4 z2, variance 1/P11 = 1.68
    assert -st.precision[0, 1] / st.precision[0, 0] == pytest.approx(0.4, rel=1e-12)
    assert 1 / st.precision_diag[0] == pytest.approx(1.68, rel=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_gibbs_untruncated_covariance(backend):
    y, K = random_problem(3, 28)
    st = GibbsState.from_kernel(K)
    rng = np.random.default_rng(29)
    out = np.empty((40000, 3))
    for t in range(40000):
        st = gibbs_z_sweep(st, y, rng, active=np.zeros(3, bool), backend=backend)
        out[t] = st.z
    C = np.cov(out.T)
    S = K + np.eye(3)
    assert np.max(np.abs(C - S)) / np.max(np.abs(S)) < 0.05
    assert np.all(np.abs(np.diag(C) - np.diag(S)) / np.diag(S) < 0.05)


@pytest.mark.parametrize("backend", BACKENDS)
def test_gibbs_single_site_half_normal(backend):
    K = np.array([[2.0]])
    z = gibbs_chain(K, np.array([1.0]), 100000, rng_seed=30, backend=backend)
    assert np.all(z >= 0)
    assert z.mean() == pytest.approx(math.sqrt(3.0) * math.sqrt(2 / math.pi), rel=0.01)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("slice_move", [False, True])
def test_gibbs_respects_constraints(backend, slice_move):
    y, K = random_problem(6, 31, amplitude=2.0)
    st = GibbsState.from_kernel(K, y.copy())
    rng = np.random.default_rng(32)
    for _ in range(200):
        st = gibbs_z_sweep(st, y, rng, slice_move=slice_move, backend=backend)
        assert np.all(y * st.z >= 0)


def test_slice_move_targets_same_law():
    K = np.array([[1.0]])
    st = GibbsState.from_kernel(K, np.array([1.0]))
    rng = np.random.default_rng(33)
    z = np.empty(100000)
    for t in range(z.size):
        st = gibbs_z_sweep(st, np.array([1.0]), rng, slice_move=True)
        z[t] = st.z[0]
    assert z.mean() == pytest.approx(math.sqrt(2.0) * math.sqrt(2 / math.pi), rel=0.02)


@pytest.mark.parametrize("backend", BACKENDS)
def test_truncnorm_half_normal_mean(backend):
    rng = np.random.default_rng(34)
    z = kernels.get_backend(backend).truncnorm(np.zeros(10**6), 1.0, 1.0, rng)
    assert np.all(z >= 0)
    assert abs(z.mean() - math.sqrt(2 / math.pi)) < 0.003


def test_truncnorm_inactive_constraint_ks():
    # 1e6 draws: at 1e5 an exact sampler exceeds D = 0.002 most of the time
    z = sample_truncated_normal(10.0, 1.0, 1.0, np.random.default_rng(35), size=10**6)
    assert stats.kstest(z, stats.norm(10.0, 1.0).cdf).statistic < 0.002


@pytest.mark.parametrize("backend", BACKENDS)
def test_truncnorm_deep_tail_mean(backend):
    mpmath.mp.dps = 50
    oracle = float(-8 + mpmath.npdf(8) / mpmath.ncdf(-8))
    z = kernels.get_backend(backend).truncnorm(np.full(10**6, -8.0), 1.0, 1.0, np.random.default_rng(36))
    assert np.all(z >= 0)
    assert z.mean() == pytest.approx(oracle, rel=0.01)


def test_truncnorm_negative_side_and_validation():
    z = sample_truncated_normal(2.0, 4.0, -1.0, np.random.default_rng(37), size=5000)
    assert np.all(z <= 0)
    with pytest.raises(ValueError):
        sample_truncated_normal(0.0, 0.0, 1.0, np.random.default_rng(0))
    assert isinstance(sample_truncated_normal(0.0, 1.0, 1.0, np.random.default_rng(0)), float)


def test_config_validation():
    with pytest.raises(ValueError):
        HmcConfig(0.0, 5)
    with pytest.raises(ValueError):
        HmcConfig(0.1, 0)
    with pytest.raises(ValueError):
        RmhmcConfig(0.1, 5, 0)
    with pytest.raises(ValueError):
        hmc_chain(prior_target(2, 0), np.array([np.nan, 0.0]), HmcConfig(0.1, 1), 1)
