import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dpht.errors import (
    DegenerateMargins,
    DegeneratePooledCell,
    DegenerateTotal,
    UnsupportedShape,
    ZeroExpectedCell,
    ZeroThetaCell,
)
from dpht.evalharness import builtin_fixture
from dpht.noise import NoiseSpec, perturb_table
from dpht.stats import (
    StatisticKind,
    chi2_gof,
    chi2_independence,
    chi2_proportions,
    classical_pvalue_chi2,
    diff_statistic,
    independence_df,
    ll_statistic,
    low_count,
    lr_gof,
    lr_independence,
    lr_modified,
    lr_proportions,
    round_clamp,
)
from dpht.tables import CountTable

ELECTION = [[238, 262], [265, 235]]
NOISY_ELECTION = [[227.85, 279.24], [253.11, 221.42]]

positive_tables = arrays(
    np.float64,
    st.tuples(st.integers(2, 4), st.integers(2, 4)),
    elements=st.floats(0.5, 1e6),
)


# -- reference values ---------------------------------------------------------


def test_election_statistics():
    assert chi2_independence(ELECTION).value == pytest.approx(2.916, abs=1e-3)
    assert lr_independence(ELECTION).value == pytest.approx(2.918, abs=1e-3)


def test_noisy_election_lr():
    assert lr_independence(NOISY_ELECTION).value == pytest.approx(6.939, abs=1e-3)


def _closed_form_2x2(t):
    (a, b), (c, d) = t
    n = a + b + c + d
    return n * (a * d - b * c) ** 2 / ((a + b) * (c + d) * (a + c) * (b + d))


@pytest.mark.parametrize("table", [[[1, 0], [0, 999]], [[1, 1], [0, 998]]])
def test_extreme_tables_match_closed_form(table):
    assert chi2_independence(table).value == pytest.approx(_closed_form_2x2(table), rel=1e-12)


def test_extreme_tables_printed_values():
    assert chi2_independence([[1, 0], [0, 999]]).value == pytest.approx(1000.0, rel=1e-12)
    # 499000/999, which prints as 499.5 at one decimal
    assert round(chi2_independence([[1, 1], [0, 998]]).value, 1) == 499.5


@pytest.mark.parametrize("stat, df, p", [(2.918, 1, 0.0876), (6.939, 1, 0.0084)])
def test_classical_pvalues(stat, df, p):
    assert classical_pvalue_chi2(stat, df) == pytest.approx(p, abs=5e-4)


@pytest.mark.parametrize("df", range(1, 21))
def test_chi2_tail_matches_mpmath(df):
    mpmath.mp.dps = 30
    for x in np.linspace(0, 100, 41):
        ref = float(mpmath.gammainc(mpmath.mpf(df) / 2, mpmath.mpf(x) / 2, mpmath.inf, regularized=True))
        assert abs(classical_pvalue_chi2(float(x), df) - ref) < 1e-8


def test_chi2_tail_edges():
    assert classical_pvalue_chi2(0.0, 5) == 1.0
    with pytest.raises(ValueError):
        classical_pvalue_chi2(-1.0, 1)
    with pytest.raises(ValueError):
        classical_pvalue_chi2(1.0, 0)


def test_chi2_tail_monotone():
    xs = np.linspace(0, 50, 200)
    ps = [classical_pvalue_chi2(x, 3) for x in xs]
    assert all(a >= b for a, b in zip(ps, ps[1:]))


# -- goodness of fit ----------------------------------------------------------


def test_gof_perfect_fit():
    th = np.array([0.2, 0.3, 0.5])
    assert chi2_gof(100 * th, th, 100).value == pytest.approx(0.0, abs=1e-12)
    assert lr_gof(100 * th, th, 100).value == pytest.approx(0.0, abs=1e-12)


def test_gof_hand_formula():
    th = np.array([0.4886148, 0.5113852])
    n = 787
    x = n * th + np.array([10.0, -10.0])
    expected = 100 / (n * th[0]) + 100 / (n * th[1])
    assert chi2_gof(x, th, n).value == pytest.approx(expected, rel=1e-12)


def test_gof_negative_value_allowed():
    res = chi2_gof([-1.0, 11.0], [0.5, 0.5], 10)
    assert math.isfinite(res.value) and res.value >= 0


def test_lr_gof_clamps_negative_cell():
    res = lr_gof([-3.0, 50.0, 53.0], [0.3, 0.3, 0.4], 100)
    assert math.isfinite(res.value) and res.value >= 0
    assert res.clamped and "clamped" in res.flags


def test_lr_gof_equals_textbook_on_exact_counts():
    x = np.array([18, 35, 47])
    th = np.array([0.2, 0.3, 0.5])
    textbook = 2 * np.sum(x * np.log(x / (100 * th)))
    assert lr_gof(x, th, 100).value == pytest.approx(textbook, rel=1e-12)


def test_gof_zero_theta():
    with pytest.raises(ZeroThetaCell):
        chi2_gof([1, 2], [0.0, 1.0], 3)
    with pytest.raises(ZeroThetaCell):
        lr_gof([1, 2], [0.0, 1.0], 3)


# -- independence -------------------------------------------------------------


def test_proportional_rows_give_zero():
    t = [[10, 20, 30], [20, 40, 60]]
    assert chi2_independence(t).value == pytest.approx(0.0, abs=1e-12)
    assert lr_independence(t).value == pytest.approx(0.0, abs=1e-12)
    assert diff_statistic(t) == pytest.approx(0.0, abs=1e-12)


def test_independence_expected_from_margins():
    res = chi2_independence(ELECTION)
    np.testing.assert_allclose(res.expected, [[251.5, 248.5], [251.5, 248.5]])


def test_independence_degenerate():
    with pytest.raises(DegenerateMargins):
        chi2_independence([[5.0, -7.0], [1.0, -2.0]])
    with pytest.raises(UnsupportedShape):
        chi2_independence([[1, 2, 3]])


@settings(max_examples=200)
@given(positive_tables, st.floats(0.1, 100))
def test_chi2_scale_equivariant(t, k):
    assert chi2_independence(k * t).value == pytest.approx(k * chi2_independence(t).value, rel=1e-9, abs=1e-9)


@settings(max_examples=200)
@given(positive_tables)
def test_statistics_nonnegative(t):
    assert chi2_independence(t).value >= 0
    # termwise nonnegative; only rounding at the scale of the total can dip below 0
    assert lr_independence(t).value >= -1e-12 * t.sum()
    assert diff_statistic(t) >= 0


def test_lr_modified_equals_lr_independence_on_noisy_tables():
    rng = np.random.default_rng(0)
    spec = NoiseSpec.laplace(0.2)
    for k in range(1000):
        shape = (2 + k % 3, 2 + (k // 3) % 3)
        t = CountTable(rng.multinomial(5000, np.full(shape[0] * shape[1], 1 / (shape[0] * shape[1]))).reshape(shape))
        nt = perturb_table(t, spec, seed=k)
        ind = lr_independence(nt)
        assert lr_modified(nt, ind.expected).value == ind.value


def test_lr_modified_zero_at_expected():
    e = np.array([3.0, 4.0, 5.0])
    assert lr_modified(e, e).value == 0.0
    with pytest.raises(ZeroExpectedCell):
        lr_modified([1.0, 2.0], [0.0, 3.0])


# -- proportions --------------------------------------------------------------


def test_proportions_hand_oracle():
    # pooled (100, 200); E1 = (100/3, 200/3), E2 = (200/3, 400/3); every deviation is 10/3
    d2 = (10 / 3) ** 2
    expected = d2 / (100 / 3) + d2 / (200 / 3) + d2 / (200 / 3) + d2 / (400 / 3)
    assert chi2_proportions([30, 70], [70, 130], 100, 200).value == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.75)


def test_proportions_identical_give_zero():
    assert chi2_proportions([10, 30], [20, 60], 40, 80).value == pytest.approx(0.0, abs=1e-12)
    assert lr_proportions([10, 30], [20, 60], 40, 80).value == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=100)
@given(
    arrays(np.float64, 3, elements=st.floats(1, 1e4)),
    arrays(np.float64, 3, elements=st.floats(1, 1e4)),
)
def test_proportions_symmetric(t, s):
    n1, n2 = t.sum(), s.sum()
    for f in (chi2_proportions, lr_proportions):
        assert f(t, s, n1, n2).value == pytest.approx(f(s, t, n2, n1).value, rel=1e-9, abs=1e-9)


def test_proportions_degenerate():
    with pytest.raises(DegeneratePooledCell):
        chi2_proportions([1.0, -5.0], [2.0, 1.0], 10, 10)


# -- testbed statistics -------------------------------------------------------


def test_ll_values():
    assert ll_statistic([[7]]) == pytest.approx(0.0, abs=1e-12)
    assert ll_statistic([[1, 0], [0, 1]]) == pytest.approx(math.log(2))


def test_ll_row_permutation_invariant():
    t = np.array([[3, 1, 4], [1, 5, 9], [2, 6, 5]])
    assert ll_statistic(t[[2, 0, 1]]) == pytest.approx(ll_statistic(t))


def test_ll_rejects_noisy_values():
    with pytest.raises(ValueError):
        ll_statistic([[1.5, 2.0], [3.0, 4.0]])
    r, changed = round_clamp(np.array([[1.4, -2.0], [3.0, 4.6]]))
    np.testing.assert_array_equal(r, [[1, 0], [3, 5]])
    assert changed
    assert ll_statistic(r) >= 0


def test_diff_election():
    assert diff_statistic(ELECTION) == pytest.approx(54.0)


def test_diff_homogeneous():
    t = np.array([[30, 10], [5, 25]])
    assert diff_statistic(7 * t) == pytest.approx(7 * diff_statistic(t))


def test_diff_zero_total():
    with pytest.raises(DegenerateTotal):
        diff_statistic([[0, 0], [0, 0]])


# -- flags --------------------------------------------------------------------


def test_low_count_rule():
    assert low_count([4.9, 100], 0.0)
    assert not low_count([5.0, 100], 0.0)
    # 5 + 3 * 14.14 = 47.4
    assert low_count([47.0, 100], NoiseSpec.laplace(0.2).std)
    assert not low_count([48.0, 100], NoiseSpec.laplace(0.2).std)
    res = chi2_independence(NOISY_ELECTION, NoiseSpec.laplace(0.2).std)
    assert not res.low_count_warning
    assert chi2_independence([[1, 50], [60, 70]]).low_count_warning


def test_statistic_kind_parse():
    assert StatisticKind.parse("LR") is StatisticKind.LR
    assert independence_df((4, 3)) == 6
    with pytest.raises(ValueError):
        StatisticKind.parse("nope")
