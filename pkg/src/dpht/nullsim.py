"""Reference distributions for noisy chi-squared and LR statistics.

The samplers keep the noise-to-signal ratio of the released table fixed in
the large-sample limit: fresh noise is scaled by ``kappa = 1/sqrt(n0)`` and
added to the Gaussian limit of the centred, root-n scaled multinomial.

All samplers take an explicit ``numpy.random.Generator`` and an optional
``size``; with ``size=None`` they return a single float.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateTotal, ZeroThetaCell
from .noise import NoiseSpec
from .stats import CLAMP, StatisticKind, chi2_terms, lr_terms
from .tables import NoisyTable, values_of

# simplex tolerance after repair
_SUM_TOL = 1e-12


class TestKind(str, enum.Enum):
    GOF = "gof"
    PROPORTIONS = "proportions"
    INDEPENDENCE = "independence"

    __test__ = False  # not a pytest class

    @classmethod
    def parse(cls, s) -> TestKind:
        if isinstance(s, cls):
            return s
        return cls(str(s).lower())


class ThetaEstimate(NamedTuple):
    theta: np.ndarray
    repaired: bool


def repair_theta(theta: np.ndarray) -> ThetaEstimate:
    """Clamp entries below ``CLAMP`` up to ``CLAMP`` and renormalize to sum 1."""
    th = np.asarray(theta, dtype=np.float64)
    hit = th < CLAMP
    repaired = bool(np.any(hit))
    th = np.where(hit, CLAMP, th)
    return ThetaEstimate(th / th.sum(), repaired)


def estimate_theta_independence(nt) -> ThetaEstimate:
    """Product-of-margins estimate ``v[i,.] v[.,j] / v[.,.]**2`` from a noisy table."""
    v = values_of(nt)
    tot = v.sum()
    if not tot > 0:
        raise DegenerateTotal("noisy table total must be > 0")
    return repair_theta(np.outer(v.sum(axis=1), v.sum(axis=0)) / tot**2)


def estimate_theta_proportions(nt, ns, n1: float, n2: float) -> ThetaEstimate:
    """Pooled estimate ``(t + s) / (n1 + n2)``, repaired onto the simplex."""
    t = np.ravel(values_of(nt))
    s = np.ravel(values_of(ns))
    if t.shape != s.shape:
        raise ValueError(f"tables differ in length: {t.size} vs {s.size}")
    pooled = (t + s) / (n1 + n2)
    if not pooled.sum() > 0:
        raise DegenerateTotal("pooled total must be > 0")
    return repair_theta(pooled)


def _check_theta(theta) -> np.ndarray:
    th = np.ravel(np.asarray(theta, dtype=np.float64))
    if np.any(th <= 0):
        raise ZeroThetaCell("every theta cell must be > 0")
    if abs(th.sum() - 1.0) > _SUM_TOL:
        raise ValueError(f"theta must sum to 1, sums to {th.sum()!r}")
    return th


def sample_multinomial_gaussian(theta, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw ``A ~ N(0, diag(theta) - theta theta^T)``.

    With ``s = sqrt(theta)`` and ``sum(theta) = 1``, ``I - s s^T`` is a
    projection, so ``A = s * (z - s (s . z))`` has exactly that covariance and
    its entries sum to zero.  ``theta`` may be a matrix; draws keep its shape.
    """
    th = np.asarray(theta, dtype=np.float64)
    s = np.sqrt(_check_theta(th))
    shape = (s.size,) if size is None else (size, s.size)
    z = rng.standard_normal(shape)
    a = s * (z - np.multiply.outer(z @ s, s))
    return a.reshape(th.shape if size is None else (size,) + th.shape)


@dataclass(frozen=True, eq=False)
class NullSamplerConfig:
    """Everything a reference sampler needs; built from public data only.

    ``n`` holds ``(n0,)`` for GOF and independence and ``(n1, n2)`` for
    proportions.  ``method`` applies to GOF: ``"exact"`` simulates
    multinomial tables, ``"gaussian"`` uses the large-sample limit.
    """

    test: TestKind
    theta0: np.ndarray
    n: tuple[int, ...]
    noise: NoiseSpec
    statistic: StatisticKind = StatisticKind.CHI2
    method: str = "exact"
    repaired: bool = False

    @property
    def kappa(self) -> tuple[float, ...]:
        return tuple(1.0 / math.sqrt(k) for k in self.n)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        if self.test is TestKind.INDEPENDENCE:
            return sample_independence_null(self, rng, size)
        if self.test is TestKind.PROPORTIONS:
            return sample_proportions_null(self, rng, size)
        if self.method == "gaussian":
            return sample_gof_gaussian_null(self.theta0, self.n[0], self.noise, rng, size)
        return sample_gof_null(self.theta0, self.n[0], self.noise, self.statistic, rng, size)


def independence_config(nt: NoisyTable, statistic=StatisticKind.CHI2) -> NullSamplerConfig:
    est = estimate_theta_independence(nt)
    return NullSamplerConfig(
        TestKind.INDEPENDENCE, est.theta, (nt.n0,), nt.noise, StatisticKind.parse(statistic), repaired=est.repaired
    )


def proportions_config(nt: NoisyTable, ns: NoisyTable, statistic=StatisticKind.CHI2) -> NullSamplerConfig:
    est = estimate_theta_proportions(nt, ns, nt.n0, ns.n0)
    if nt.noise != ns.noise:
        raise ValueError("both tables must carry the same noise specification")
    return NullSamplerConfig(
        TestKind.PROPORTIONS, est.theta, (nt.n0, ns.n0), nt.noise, StatisticKind.parse(statistic), repaired=est.repaired
    )


def gof_config(theta0, n0: int, noise: NoiseSpec, statistic=StatisticKind.CHI2, method: str = "exact") -> NullSamplerConfig:
    if method not in ("exact", "gaussian"):
        raise ValueError(f"unknown GOF method {method!r}")
    return NullSamplerConfig(TestKind.GOF, _check_theta(theta0), (int(n0),), noise, StatisticKind.parse(statistic), method)


def _scalar(t: np.ndarray, size):
    return float(t[0]) if size is None else t


def sample_independence_null(cfg: NullSamplerConfig, rng: np.random.Generator, size: int | None = None):
    """Reference draws for the independence test.

    ``X = A + kappa V*`` and
    ``t = sum X^2/theta - sum_i X[i,.]^2/theta[i,.] - sum_j X[.,j]^2/theta[.,j] + X[.,.]^2/theta[.,.]``.
    """
    th = cfg.theta0
    k = 1 if size is None else size
    a = sample_multinomial_gaussian(th, rng, k)
    x = a + cfg.kappa[0] * cfg.noise.draw(rng, a.shape)
    xr, xc = x.sum(axis=2), x.sum(axis=1)
    t = (
        (x**2 / th).sum(axis=(1, 2))
        - (xr**2 / th.sum(axis=1)).sum(axis=1)
        - (xc**2 / th.sum(axis=0)).sum(axis=1)
        + xr.sum(axis=1) ** 2 / th.sum()
    )
    return _scalar(t, size)


def sample_proportions_null(cfg: NullSamplerConfig, rng: np.random.Generator, size: int | None = None):
    """Reference draws for the two-sample proportions test."""
    th = cfg.theta0
    n1, n2 = cfg.n
    k1, k2 = cfg.kappa
    k = 1 if size is None else size
    a1 = sample_multinomial_gaussian(th, rng, k)
    a2 = sample_multinomial_gaussian(th, rng, k)
    x1 = a1 + k1 * cfg.noise.draw(rng, a1.shape)
    x2 = a2 + k2 * cfg.noise.draw(rng, a2.shape)
    w1, w2 = math.sqrt(n2 / (n1 + n2)), math.sqrt(n1 / (n1 + n2))
    t = ((w1 * x1 - w2 * x2) ** 2 / th).sum(axis=1)
    return _scalar(t, size)


def sample_gof_null(theta0, n0: int, spec: NoiseSpec, stat, rng: np.random.Generator, size: int | None = None):
    """Exact finite-sample reference: multinomial tables plus fresh noise."""
    th = _check_theta(theta0)
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    stat = StatisticKind.parse(stat)
    k = 1 if size is None else size
    q = rng.multinomial(int(n0), th, size=k).astype(np.float64)
    q += spec.draw(rng, q.shape)
    e = n0 * th
    if stat is StatisticKind.CHI2:
        t = chi2_terms(q, e).sum(axis=1)
    elif stat in (StatisticKind.LR, StatisticKind.LR_MODIFIED):
        t = lr_terms(q, e).sum(axis=1)
    else:
        raise ValueError(f"GOF supports chi2 and lr, not {stat.value}")
    return _scalar(t, size)


def sample_gof_gaussian_null(theta0, n0: int, spec: NoiseSpec, rng: np.random.Generator, size: int | None = None):
    """Large-sample GOF reference ``sum (A + kappa V*)^2 / theta``."""
    th = _check_theta(theta0)
    k = 1 if size is None else size
    a = sample_multinomial_gaussian(th, rng, k)
    x = a + spec.draw(rng, a.shape) / math.sqrt(n0)
    return _scalar((x**2 / th).sum(axis=1), size)
