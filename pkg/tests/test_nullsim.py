import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from dpht.errors import DegenerateTotal, ZeroThetaCell
from dpht.evalharness import builtin_fixture
from dpht.noise import NoiseSpec, release_exact
from dpht.nullsim import (
    NullSamplerConfig,
    TestKind,
    estimate_theta_independence,
    estimate_theta_proportions,
    gof_config,
    independence_config,
    proportions_config,
    repair_theta,
    sample_gof_gaussian_null,
    sample_gof_null,
    sample_independence_null,
    sample_multinomial_gaussian,
    sample_proportions_null,
)
from dpht.stats import StatisticKind
from dpht.tables import CountTable, NoisyTable

NO_NOISE = NoiseSpec.none()


def _rng(k=0):
    return np.random.default_rng(k)


def _cfg(test, theta, n, noise=NO_NOISE):
    return NullSamplerConfig(TestKind.parse(test), np.asarray(theta, dtype=float), n, noise)


@pytest.mark.parametrize("theta", [(0.5, 0.5), (1 / 3, 1 / 3, 1 / 3), (0.1, 0.1, 0.8), tuple(np.full(9, 1 / 9))])
def test_gaussian_covariance_and_zero_sum(theta):
    th = np.array(theta)
    a = sample_multinomial_gaussian(th, _rng(1), 100_000)
    cov = np.cov(a, rowvar=False)
    assert np.max(np.abs(cov - (np.diag(th) - np.outer(th, th)))) < 0.01
    assert np.max(np.abs(a.sum(axis=1))) < 1e-12
    # zero mean within 4 standard errors per coordinate
    se = np.sqrt(np.diag(np.diag(th) - np.outer(th, th)) / len(a))
    assert np.all(np.abs(a.mean(axis=0)) < 4 * se + 1e-15)


def test_gaussian_keeps_matrix_shape():
    th = np.full((2, 3), 1 / 6)
    assert sample_multinomial_gaussian(th, _rng()).shape == (2, 3)
    assert sample_multinomial_gaussian(th, _rng(), 5).shape == (5, 2, 3)


def test_gaussian_rejects_zero_cell():
    with pytest.raises(ZeroThetaCell):
        sample_multinomial_gaussian([0.0, 1.0], _rng())


def test_theta_from_exact_election():
    est = estimate_theta_independence(release_exact(builtin_fixture("election")))
    np.testing.assert_allclose(est.theta, np.outer([0.5, 0.5], [0.503, 0.497]), atol=1e-15)
    assert not est.repaired


def test_theta_repair_on_negative_margin():
    nt = NoisyTable([[5.0, -30.0], [20.0, 10.0]], 30, NoiseSpec.laplace(0.1))
    est = estimate_theta_independence(nt)
    assert est.repaired
    assert np.all(est.theta > 0)
    assert abs(est.theta.sum() - 1) < 1e-12


def test_theta_zero_total():
    with pytest.raises(DegenerateTotal):
        estimate_theta_independence(np.array([[1.0, -1.0], [2.0, -2.0]]))


@settings(max_examples=100)
@given(st.lists(st.floats(-50, 1000), min_size=2, max_size=8).filter(lambda v: sum(v) > 1))
def test_repair_always_simplex(v):
    th = repair_theta(np.array(v) / sum(v)).theta
    assert np.all(th > 0)
    assert abs(th.sum() - 1) < 1e-12


def test_proportions_theta():
    t, s = np.array([10.0, 30.0]), np.array([20.0, 60.0])
    est = estimate_theta_proportions(t, s, 40, 80)
    np.testing.assert_allclose(est.theta, [0.25, 0.75])
    rep = estimate_theta_proportions(np.array([-10.0, 50.0]), np.array([2.0, 60.0]), 40, 62)
    assert rep.repaired and np.all(rep.theta > 0)


def _ks_chi2(t, df):
    return sps.kstest(t, "chi2", args=(df,)).statistic


def test_independence_classical_limit():
    t = sample_independence_null(_cfg("independence", np.full((2, 2), 0.25), (1000,)), _rng(2), 100_000)
    assert _ks_chi2(t, 1) < 0.01


def test_independence_uniform_nonnegative():
    t = sample_independence_null(_cfg("independence", np.full((2, 2), 0.25), (1000,)), _rng(3), 1_000_000)
    assert t.min() >= -1e-12


def test_independence_is_deterministic():
    cfg = independence_config(release_exact(builtin_fixture("election")))
    np.testing.assert_array_equal(cfg.sample(_rng(4), 50), cfg.sample(_rng(4), 50))
    assert isinstance(cfg.sample(_rng(4)), float)


def test_proportions_classical_limit_and_nonnegative():
    t = sample_proportions_null(_cfg("proportions", [0.5, 0.5], (300, 700)), _rng(5), 100_000)
    assert t.min() >= 0
    assert _ks_chi2(t, 1) < 0.01


def test_proportions_swap_symmetry():
    spec = NoiseSpec.laplace(0.5)
    a = sample_proportions_null(_cfg("proportions", [0.2, 0.3, 0.5], (300, 700), spec), _rng(6), 100_000)
    b = sample_proportions_null(_cfg("proportions", [0.2, 0.3, 0.5], (700, 300), spec), _rng(7), 100_000)
    assert sps.ks_2samp(a, b).statistic < 0.01


def test_gof_classical_limit():
    t = sample_gof_null(np.full(4, 0.25), 10_000, NO_NOISE, "chi2", _rng(8), 100_000)
    assert _ks_chi2(t, 3) < 0.015


def test_gof_single_record():
    t = sample_gof_null(np.full(4, 0.25), 1, NoiseSpec.laplace(1.0), "lr", _rng(9), 1000)
    assert np.all(np.isfinite(t))


def test_gof_exact_matches_gaussian_limit():
    th = np.array([0.1, 0.2, 0.3, 0.4])
    spec = NoiseSpec.laplace(0.2)
    a = sample_gof_null(th, 100_000, spec, "chi2", _rng(10), 100_000)
    b = sample_gof_gaussian_null(th, 100_000, spec, _rng(11), 100_000)
    assert sps.ks_2samp(a, b).statistic < 0.02


def test_noise_shifts_reference_upwards():
    # at small n the fresh noise must inflate the null statistic
    th = np.full((2, 2), 0.25)
    quiet = sample_independence_null(_cfg("independence", th, (1000,)), _rng(12), 20_000)
    noisy = sample_independence_null(_cfg("independence", th, (1000,), NoiseSpec.laplace(0.2)), _rng(12), 20_000)
    assert noisy.mean() > 1.5 * quiet.mean()


def test_config_builders():
    nt = release_exact(CountTable([[10, 20], [30, 40]]))
    cfg = independence_config(nt, "lr")
    assert cfg.kappa == (1 / math.sqrt(100),)
    assert cfg.statistic is StatisticKind.LR
    ns = release_exact(CountTable([[5, 10, 15]]))
    pc = proportions_config(release_exact(CountTable([[1, 2, 3]])), ns)
    assert pc.n == (6, 30)
    with pytest.raises(ValueError):
        proportions_config(release_exact(CountTable([[1, 2, 3]])), NoisyTable([[1.0, 2.0, 3.0]], 6, NoiseSpec.laplace(1)))
    with pytest.raises(ValueError):
        gof_config([0.5, 0.5], 10, NO_NOISE, method="bogus")
    with pytest.raises(ValueError):
        gof_config([0.5, 0.6], 10, NO_NOISE)
