import csv
import io
import json
import math

import numpy as np
import pytest

from dpht.errors import OutOfRange, UnknownFixture
from dpht.evalharness import (
    QQSeries,
    ReliabilityConfig,
    agreement_experiment,
    builtin_fixture,
    ks_uniform,
    reliability_experiment,
    reliability_trial,
)
from dpht.noise import release_exact
from dpht.pvalue import TestRequest, run_test
from dpht.stats import classical_pvalue_chi2, lr_independence
from dpht.streams import child_seed, rng_for
from dpht.tables import CountTable


def test_fixtures():
    e = builtin_fixture("election")
    assert e.n == 1000
    taxi = builtin_fixture("nyc_taxi")
    assert taxi.shape == (4, 3)
    assert taxi.n == 165_114_361
    assert taxi.row_sums[0] == 116_291_354
    with pytest.raises(UnknownFixture):
        builtin_fixture("czech")


def test_ks_uniform_edges():
    m = 1000
    assert ks_uniform(np.arange(1, m + 1) / m) <= 1 / m + 1e-12
    assert ks_uniform(np.zeros(50)) == pytest.approx(1.0)
    assert ks_uniform(np.random.default_rng(0).random(10_000)) < 0.02
    with pytest.raises(OutOfRange):
        ks_uniform([0.5, 1.2])
    with pytest.raises(OutOfRange):
        ks_uniform([np.nan])


def test_qq_series():
    p = np.array([0.9, 0.1, 0.5, 0.3])
    qq = QQSeries.from_pvalues(p)
    np.testing.assert_array_equal(qq.p_values, np.sort(p))
    np.testing.assert_array_equal(qq.trials, [1, 3, 2, 0])
    np.testing.assert_allclose(qq.uniform_quantiles, [0.125, 0.375, 0.625, 0.875])
    assert qq.ks == pytest.approx(ks_uniform(p))
    rows = list(csv.reader(io.StringIO(qq.to_csv())))
    assert rows[0] == ["trial", "p_value", "uniform_quantile"]
    assert len(rows) == 5


def test_qq_thin():
    qq = QQSeries.from_pvalues(np.linspace(0, 1, 2000))
    thin = qq.thin(400)
    assert len(thin.p_values) == 5
    assert thin.p_values[0] == qq.p_values[399]


def test_config_validation():
    with pytest.raises(ValueError):
        ReliabilityConfig(trials=0)
    with pytest.raises(ValueError):
        ReliabilityConfig(test="gof")
    with pytest.raises(ValueError):
        ReliabilityConfig(method="magic")
    with pytest.raises(ValueError):
        ReliabilityConfig(p_row=(0.5, 0.6))


def test_nonprivate_calibration():
    qq = reliability_experiment(ReliabilityConfig(epsilon=math.inf, trials=2000, m=1000, seed=3))
    assert qq.ks < 0.03


def test_infinite_epsilon_is_the_classical_path():
    cfg = ReliabilityConfig(epsilon=math.inf, trials=5, m=500, seed=4, statistic="lr")
    for k in range(5):
        flat = rng_for(cfg.seed, "table", k).multinomial(cfg.n0, cfg.cell_probs.ravel())
        exact = release_exact(CountTable(flat.reshape(2, 2)))
        req = TestRequest("independence", exact, "lr", m=500, seed=child_seed(cfg.seed, "ref", k))
        assert reliability_trial(cfg, k) == run_test(req).p_value


def test_reliability_threads_invariant():
    cfg = ReliabilityConfig(trials=40, m=300, seed=5)
    a = reliability_experiment(cfg)
    b = reliability_experiment(cfg, threads=4)
    np.testing.assert_array_equal(a.p_values, b.p_values)
    np.testing.assert_array_equal(a.trials, b.trials)


@pytest.mark.parametrize(
    "cfg",
    [
        ReliabilityConfig(test="gof", theta=(0.25, 0.25, 0.5), trials=300, m=300, seed=6),
        ReliabilityConfig(test="proportions", theta=(0.3, 0.7), n2=600, trials=300, m=300, seed=7),
        ReliabilityConfig(p_row=(0.2, 0.3, 0.5), p_col=(0.4, 0.6), trials=300, m=300, seed=8, method="naive_js"),
    ],
)
def test_reliability_other_settings_run(cfg):
    qq = reliability_experiment(cfg)
    assert len(qq.p_values) == 300
    assert np.all((qq.p_values >= 0) & (qq.p_values <= 1))


def test_agreement_infinite_epsilon_matches_nonprivate():
    res = agreement_experiment(builtin_fixture("election"), "independence", ("chi2", "lr"), (math.inf,), 4, 5000, seed=9)
    for row in res.rows:
        assert row.mean_p == row.nonprivate_p
        assert row.p10 == row.p90 == row.nonprivate_p


def test_agreement_nonprivate_near_classical():
    t = builtin_fixture("election")
    m = 20_000
    res = agreement_experiment(t, "independence", ("lr",), (1.0,), 2, m, seed=10)
    classical = classical_pvalue_chi2(lr_independence(t).value, 1)
    assert abs(res.rows[0].nonprivate_p - classical) < 2 / math.sqrt(m)


def test_agreement_noise_dominated():
    t = CountTable([[540, 460], [460, 540]])
    res = agreement_experiment(t, "independence", ("chi2",), (0.02,), 60, 1000, seed=11)
    row = res.rows[0]
    assert row.nonprivate_p < 0.01
    assert row.p90 - row.p10 > 0.3
    assert row.mean_p > 0.1


def test_agreement_outputs():
    res = agreement_experiment(builtin_fixture("election"), "independence", ("chi2",), (0.5, math.inf), 3, 200, seed=12)
    rows = list(csv.reader(io.StringIO(res.to_csv())))
    assert rows[0] == ["epsilon", "statistic", "mean_p", "p10", "p90", "nonprivate_p"]
    assert rows[2][0] == "inf"
    d = json.loads(res.to_json())
    assert len(d["rows"]) == 2 and d["config"]["seed"] == 12
    again = agreement_experiment(builtin_fixture("election"), "independence", ("chi2",), (0.5, math.inf), 3, 200, seed=12, threads=3)
    assert again.to_csv() == res.to_csv()
