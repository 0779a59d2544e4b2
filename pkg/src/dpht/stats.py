"""Test statistics on exact or noisy tables.

Noisy tables can hold values that are zero, negative or fractional.  To keep
every statistic finite, any cell value or expected count at or below
``CLAMP`` is replaced by ``CLAMP`` before a log or a division, and the
result is flagged.  The null samplers apply the identical rule, so observed
and reference statistics stay exchangeable.

The likelihood-ratio forms all carry the ``-(x - e)`` correction term:
``2 * sum(x log(x/e) - x + e)``.  Whenever the expected counts are estimated
from the same table (independence, proportions) that term sums to zero, so
the value equals the textbook LR; with it, every term is ``e * f(x/e)`` with
``f(u) = u log u - u + 1 >= 0``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy import stats as sps

from .errors import (
    DegenerateMargins,
    DegeneratePooledCell,
    DegenerateTotal,
    UnsupportedShape,
    ZeroExpectedCell,
    ZeroThetaCell,
)
from .tables import values_of

CLAMP = 1e-9
# low-count threshold: 5 plus three noise standard deviations
LOW_COUNT_BASE = 5.0
LOW_COUNT_SDS = 3.0


class StatisticKind(str, enum.Enum):
    CHI2 = "chi2"
    LR = "lr"
    LR_MODIFIED = "lr_modified"
    LL = "ll"
    DIFF = "diff"

    @classmethod
    def parse(cls, s) -> StatisticKind:
        if isinstance(s, cls):
            return s
        return cls(str(s).lower())


@dataclass(frozen=True, eq=False)
class StatResult:
    """A statistic value together with the expected counts it used."""

    value: float
    expected: np.ndarray | None = None
    clamped: bool = False
    low_count_warning: bool = False

    def __float__(self):
        return self.value

    @property
    def flags(self) -> tuple[str, ...]:
        out = []
        if self.clamped:
            out.append("clamped")
        if self.low_count_warning:
            out.append("low_count_warning")
        return tuple(out)


def low_count(values, noise_std: float = 0.0) -> bool:
    """True if any cell is below ``5 + 3 * noise_std``."""
    return bool(np.any(np.asarray(values) < LOW_COUNT_BASE + LOW_COUNT_SDS * noise_std))


def _clamp(x: np.ndarray) -> tuple[np.ndarray, bool]:
    hit = x <= CLAMP
    if np.any(hit):
        return np.where(hit, CLAMP, x), True
    return x, False


# -- batch kernels -------------------------------------------------------------
# Leading axes are batch axes; the last one (or two) are table cells.


def chi2_terms(x: np.ndarray, e: np.ndarray) -> np.ndarray:
    return (x - e) ** 2 / e


def lr_terms(x: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Clamped ``2 (x log(x/e) - x + e)`` per cell; ``e`` must already be > 0."""
    x = np.maximum(x, CLAMP)
    return 2.0 * (x * np.log(x / e) - x + e)


def independence_expected(v: np.ndarray) -> np.ndarray:
    """``E[i,j] = v[i,.] v[.,j] / v[.,.]`` over the last two axes, clamped at CLAMP."""
    rs = v.sum(axis=-1, keepdims=True)
    cs = v.sum(axis=-2, keepdims=True)
    tot = rs.sum(axis=-2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = rs * cs / tot
    return np.where(np.isfinite(e) & (e > CLAMP), e, CLAMP)


def chi2_independence_batch(v: np.ndarray) -> np.ndarray:
    e = independence_expected(v)
    return chi2_terms(v, e).sum(axis=(-2, -1))


def lr_independence_batch(v: np.ndarray) -> np.ndarray:
    e = independence_expected(v)
    return lr_terms(v, e).sum(axis=(-2, -1))


def diff_batch(v: np.ndarray) -> np.ndarray:
    rs = v.sum(axis=-1, keepdims=True)
    cs = v.sum(axis=-2, keepdims=True)
    tot = rs.sum(axis=-2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = rs * cs / tot
    return np.abs(v - e).sum(axis=(-2, -1))


def ll_batch(t: np.ndarray) -> np.ndarray:
    """LL on integer-valued tables (last two axes)."""
    t = np.asarray(t, dtype=np.float64)
    rs = t.sum(axis=-1)
    cs = t.sum(axis=-2)
    n = rs.sum(axis=-1)
    g = special.gammaln
    return -(g(rs + 1).sum(axis=-1) + g(cs + 1).sum(axis=-1) - g(n + 1) - g(t + 1).sum(axis=(-2, -1)))


def round_clamp(v: np.ndarray) -> tuple[np.ndarray, bool]:
    """Nearest nonnegative integers; flag is True if anything changed."""
    r = np.maximum(np.rint(v), 0.0)
    return r, bool(np.any(r != v))


# -- goodness of fit -----------------------------------------------------------


def _gof_expected(values, theta, n) -> tuple[np.ndarray, np.ndarray]:
    x = np.ravel(values_of(values))
    th = np.ravel(np.asarray(theta, dtype=np.float64))
    if x.shape != th.shape:
        raise ValueError(f"values have {x.size} cells but theta has {th.size}")
    if np.any(th <= 0):
        raise ZeroThetaCell("every theta cell must be > 0")
    if not n > 0:
        raise ValueError(f"n must be > 0, got {n}")
    return x, n * th


def chi2_gof(values, theta, n: float, noise_std: float = 0.0) -> StatResult:
    """Pearson goodness-of-fit statistic against ``n * theta``."""
    x, e = _gof_expected(values, theta, n)
    return StatResult(float(chi2_terms(x, e).sum()), e, False, low_count(x, noise_std))


def lr_gof(values, theta, n: float, noise_std: float = 0.0) -> StatResult:
    """Corrected likelihood-ratio goodness-of-fit statistic.

    ``2 * sum(x log(x / (n theta)) - x + n theta)``; the correction keeps the
    statistic well behaved when the noisy total differs from ``n``.
    """
    x, e = _gof_expected(values, theta, n)
    _, clamped = _clamp(x)
    return StatResult(float(lr_terms(x, e).sum()), e, clamped, low_count(x, noise_std))


def lr_uncorrected(values, expected) -> float:
    """Textbook ``2 sum x log(x/e)`` with the clamp; what off-the-shelf
    software computes on a noisy table."""
    x, _ = _clamp(np.asarray(values, dtype=np.float64))
    e, _ = _clamp(np.asarray(expected, dtype=np.float64))
    return float(2.0 * (x * np.log(x / e)).sum())


# -- independence --------------------------------------------------------------


def _independence_input(t) -> tuple[np.ndarray, np.ndarray, bool]:
    v = values_of(t)
    if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
        raise UnsupportedShape(f"independence needs at least a 2x2 table, got shape {v.shape}")
    rs, cs = v.sum(axis=1), v.sum(axis=0)
    if np.any(rs <= 0) or np.any(cs <= 0):
        raise DegenerateMargins("every row and column sum must be > 0")
    e = np.outer(rs, cs) / v.sum()
    e, clamped = _clamp(e)
    return v, e, clamped


def chi2_independence(t, noise_std: float = 0.0) -> StatResult:
    """Pearson independence statistic with expected counts from the margins.

    >>> round(chi2_independence([[238, 262], [265, 235]]).value, 3)
    2.916
    """
    v, e, clamped = _independence_input(t)
    return StatResult(float(chi2_terms(v, e).sum()), e, clamped, low_count(v, noise_std))


def lr_independence(t, noise_std: float = 0.0) -> StatResult:
    """Likelihood-ratio independence statistic with margin-derived expected counts."""
    v, e, clamped = _independence_input(t)
    res = lr_modified(v, e)
    return StatResult(res.value, e, clamped or res.clamped, low_count(v, noise_std))


def lr_modified(values, expected) -> StatResult:
    """``2 sum [x log(x/e) - (x - e)]`` for arbitrary positive expected counts."""
    x = np.asarray(values_of(values), dtype=np.float64)
    e = np.asarray(expected, dtype=np.float64)
    if x.shape != e.shape:
        raise ValueError(f"shape mismatch: values {x.shape}, expected {e.shape}")
    if np.any(e <= 0):
        raise ZeroExpectedCell("expected counts must be > 0")
    e, ce = _clamp(e)
    _, cx = _clamp(x)
    return StatResult(float(lr_terms(x, e).sum()), e, ce or cx)


# -- sample proportions --------------------------------------------------------


def _proportions_expected(tv, sv, n1, n2):
    t = np.ravel(values_of(tv))
    s = np.ravel(values_of(sv))
    if t.shape != s.shape:
        raise ValueError(f"tables differ in length: {t.size} vs {s.size}")
    if not (n1 > 0 and n2 > 0):
        raise ValueError("n1 and n2 must be > 0")
    pooled = t + s
    if np.any(pooled <= 0):
        raise DegeneratePooledCell("every pooled cell must be > 0")
    e1, c1 = _clamp(n1 * pooled / (n1 + n2))
    e2, c2 = _clamp(n2 * pooled / (n1 + n2))
    return t, s, e1, e2, c1 or c2


def chi2_proportions(tv, sv, n1: float, n2: float, noise_std: float = 0.0) -> StatResult:
    """Pearson statistic for equality of two multinomial proportion vectors."""
    t, s, e1, e2, clamped = _proportions_expected(tv, sv, n1, n2)
    value = chi2_terms(t, e1).sum() + chi2_terms(s, e2).sum()
    return StatResult(float(value), np.stack([e1, e2]), clamped, low_count(np.concatenate([t, s]), noise_std))


def lr_proportions(tv, sv, n1: float, n2: float, noise_std: float = 0.0) -> StatResult:
    t, s, e1, e2, clamped = _proportions_expected(tv, sv, n1, n2)
    res = lr_modified(np.concatenate([t, s]), np.concatenate([e1, e2]))
    return StatResult(res.value, np.stack([e1, e2]), clamped or res.clamped, low_count(np.concatenate([t, s]), noise_std))


# -- testbed statistics ----------------------------------------------------------


def ll_statistic(t) -> float:
    """Negative log of the margin-conditional table probability.

    Needs whole counts; round noisy input with :func:`round_clamp` first.
    """
    v = values_of(t)
    if np.any(v < 0) or np.any(v != np.rint(v)):
        raise ValueError("LL needs nonnegative integer counts; use round_clamp on noisy tables")
    return float(ll_batch(v))


def diff_statistic(t) -> float:
    """Sum of absolute deviations from margin-derived expected counts."""
    v = values_of(t)
    if v.ndim != 2:
        raise UnsupportedShape("Diff needs a 2-D table")
    if not v.sum() > 0:
        raise DegenerateTotal("table total must be > 0")
    return float(diff_batch(v))


# -- classical reference ---------------------------------------------------------


def classical_pvalue_chi2(stat: float, df: int) -> float:
    """Upper tail of the chi-squared(df) distribution at ``stat``."""
    if stat < 0 or math.isnan(stat):
        raise ValueError(f"statistic must be >= 0, got {stat}")
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    return float(sps.chi2.sf(stat, df))


def independence_df(shape: tuple[int, int]) -> int:
    return (shape[0] - 1) * (shape[1] - 1)
