import math

import numpy as np
import pytest

from conftest import K2, Y2, random_problem
from gpclogz import smc
from gpclogz.smc import ParticleCollapse, RmConfig, ess, residual_resample, rm_estimate

ORACLE = math.log(0.25 + math.asin(0.4) / (2 * math.pi))
ORACLE_MIXED = math.log(0.25 - math.asin(0.4) / (2 * math.pi))


def test_ess_examples():
    assert ess(np.zeros(100)) == pytest.approx(100.0)
    assert ess(np.array([0.0, -np.inf, -np.inf])) == 1.0
    assert ess(np.log([2.0, 1.0, 1.0])) == pytest.approx(16 / 6, rel=1e-14)
    with pytest.raises(ParticleCollapse):
        ess(np.full(4, -np.inf))


def counts(parents, r):
    return np.bincount(parents, minlength=r)


def test_residual_deterministic_cases():
    rng = np.random.default_rng(0)
    lw = np.log(np.array([0.5, 0.3, 0.2]))
    # R = 10 particles whose normalised weights are (0.5, 0.3, 0.2)
    lw10 = np.concatenate([lw, np.full(7, -np.inf)])
    c = counts(residual_resample(lw10, rng), 10)
    assert list(c[:3]) == [5, 3, 2]
    assert np.array_equal(np.sort(residual_resample(np.zeros(10), rng)), np.arange(10))


def test_residual_stochastic_expectation():
    lw = np.concatenate([np.log([0.55, 0.25, 0.20]), np.full(7, -np.inf)])
    rng = np.random.default_rng(1)
    draws = np.array([counts(residual_resample(lw, rng), 10)[:3] for _ in range(20000)])
    assert np.all(draws.min(axis=0) >= [5, 2, 2])
    assert np.all(draws[:, 2] == 2)
    m, s = draws.mean(axis=0), draws.std(axis=0) / math.sqrt(len(draws))
    assert abs(m[0] - 5.5) < 3 * s[0] and abs(m[1] - 2.5) < 3 * s[1]


def test_single_site_log_half():
    vals = [rm_estimate(np.array([1.0]), np.array([[1.0]]), RmConfig(4000, rng_seed=s))[0] for s in range(5)]
    assert abs(np.mean(vals) - math.log(0.5)) < 0.02


def test_two_sites_oracle():
    vals = [rm_estimate(Y2, K2, RmConfig(10000, rng_seed=s))[0] for s in range(20)]
    assert abs(np.mean(vals) - ORACLE) < 0.03


def test_mixed_labels_oracle():
    vals = [rm_estimate(np.array([1.0, -1.0]), K2, RmConfig(10000, rng_seed=s))[0] for s in range(10)]
    assert abs(np.mean(vals) - ORACLE_MIXED) < 0.03


def test_unbiased_in_probability_space():
    zs = np.exp([rm_estimate(Y2, K2, RmConfig(2000, rng_seed=s))[0] for s in range(50)])
    se = zs.std(ddof=1) / math.sqrt(zs.size)
    assert abs(zs.mean() - math.exp(ORACLE)) < 3 * se


def test_ess_equals_survivors_after_uniform_weights():
    y, K = random_problem(6, 3)
    _, d = rm_estimate(y, K, RmConfig(500, resample_threshold=1.0, rng_seed=2))
    # threshold 1 resamples after every constraint, so weights are uniform beforehand
    for e, s in zip(d.ess, d.survivors):
        assert e == pytest.approx(s, rel=1e-12)


def test_random_order_same_estimand():
    y, K = random_problem(3, 4)
    from gpclogz.oracle import exact_log_z
    v = [rm_estimate(y, K, RmConfig(5000, rng_seed=s, order="random"))[0] for s in range(10)]
    assert abs(np.mean(v) - exact_log_z(K, y)) < 0.03


def test_constraints_hold_after_moves():
    y, K = random_problem(50, 5, amplitude=2.0)
    lz, d = rm_estimate(y, K, RmConfig(300, rng_seed=3))
    assert math.isfinite(lz) and d.n_resamples > 0


def test_move_changes_positions_not_weights():
    y, K = random_problem(4, 6)
    Z = np.ascontiguousarray(np.abs(np.random.default_rng(0).standard_normal((20, 4))) * y)
    P = np.linalg.inv(K + np.eye(4))
    Z0 = Z.copy()
    smc._move(Z, np.ascontiguousarray(P), y, np.ones(4, bool), 2, 0, 1, False, 1, None)
    assert not np.array_equal(Z, Z0)
    assert np.all(Z * y >= 0)


def test_thread_count_does_not_change_result():
    y, K = random_problem(8, 7)
    a = rm_estimate(y, K, RmConfig(1500, rng_seed=5), threads=1)[0]
    b = rm_estimate(y, K, RmConfig(1500, rng_seed=5), threads=4)[0]
    assert a == b


def test_collapse_reports_step():
    y = np.array([1.0, -1.0])
    K = np.array([[100.0, 99.999], [99.999, 100.0]])
    with pytest.raises(ParticleCollapse) as err:
        rm_estimate(y, K, RmConfig(2, rng_seed=0, resample_threshold=0.1))
    assert err.value.k is not None


def test_config_validation():
    with pytest.raises(ValueError):
        RmConfig(r_particles=1)
    with pytest.raises(ValueError):
        RmConfig(resample_threshold=0.0)
    with pytest.raises(ValueError):
        RmConfig(order="reverse")
