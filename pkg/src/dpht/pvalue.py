"""Monte Carlo p-values for tests on privatized tables.

The recipe: compute the statistic ``t*`` from the noisy release, draw ``m``
reference statistics from the noise-aware null, report the fraction of
references with ``t_i >= t*``.

Everything here is post-processing of a differentially private release.  A
:class:`TestRequest` only holds :class:`~dpht.tables.NoisyTable` objects,
their declared sizes and noise specs; exact counts cannot get in.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SamplerFailure
from .nullsim import (
    NullSamplerConfig,
    TestKind,
    gof_config,
    independence_config,
    proportions_config,
)
from .stats import (
    StatisticKind,
    StatResult,
    chi2_gof,
    chi2_independence,
    chi2_proportions,
    classical_pvalue_chi2,
    independence_df,
    lr_gof,
    lr_independence,
    lr_proportions,
    lr_uncorrected,
)
from .streams import block_draws, resolve_seed
from .tables import NoisyTable, as_theta

DEFAULT_M = 10_000


@dataclass(frozen=True)
class TestResult:
    """Outcome of one Monte Carlo test; ``p_value == exceed_count / m``
    (or ``(exceed_count + 1) / (m + 1)`` with smoothing)."""

    __test__ = False

    test: str
    statistic: str
    t_star: float
    exceed_count: int
    m: int
    p_value: float
    seed: int
    flags: tuple[str, ...] = ()
    noise: dict | None = None

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": self.statistic,
            "t_star": self.t_star,
            "m": self.m,
            "exceed": self.exceed_count,
            "p": self.p_value,
            "flags": list(self.flags),
            "seed": self.seed,
            "noise": self.noise,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True, eq=False)
class TestRequest:
    """A test to run on one (GOF, independence) or two (proportions) noisy tables."""

    __test__ = False

    test: TestKind
    tables: tuple[NoisyTable, ...]
    statistic: StatisticKind = StatisticKind.CHI2
    theta0: np.ndarray | None = None
    m: int = DEFAULT_M
    seed: int | None = None
    smoothing: bool = False
    gof_method: str = "exact"
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "test", TestKind.parse(self.test))
        object.__setattr__(self, "statistic", StatisticKind.parse(self.statistic))
        tables = (self.tables,) if isinstance(self.tables, NoisyTable) else tuple(self.tables)
        for t in tables:
            if not isinstance(t, NoisyTable):
                raise TypeError(
                    f"tests run on NoisyTable releases only, got {type(t).__name__}; "
                    "privatize first (or wrap with noise.release_exact for epsilon = inf)"
                )
        object.__setattr__(self, "tables", tables)
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.statistic not in (StatisticKind.CHI2, StatisticKind.LR, StatisticKind.LR_MODIFIED):
            raise ValueError(f"{self.statistic.value} is only available in the testbed")
        want = 2 if self.test is TestKind.PROPORTIONS else 1
        if len(tables) != want:
            raise ValueError(f"{self.test.value} needs {want} table(s), got {len(tables)}")
        if self.test is TestKind.GOF:
            if self.theta0 is None:
                raise ValueError("goodness of fit needs theta0")
            object.__setattr__(self, "theta0", as_theta(np.ravel(self.theta0)))
        if self.test is TestKind.PROPORTIONS and tables[0].shape != tables[1].shape:
            raise ValueError("proportion tables must have the same number of cells")


def monte_carlo_pvalue(
    t_star: float,
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    m: int = DEFAULT_M,
    seed: int | None = None,
    smoothing: bool = False,
    threads: int = 1,
    test: str = "custom",
    statistic: str = "custom",
    flags: tuple[str, ...] = (),
    noise: dict | None = None,
) -> TestResult:
    """Exceedance p-value of ``t_star`` against ``m`` draws of ``sampler``.

    ``sampler(rng, size)`` must return ``size`` reference values.  Ties count
    as exceedances.
    """
    seed = resolve_seed(seed)
    refs = block_draws(sampler, m, seed, ("ref",), threads)
    if not np.all(np.isfinite(refs)):
        raise SamplerFailure("null sampler returned non-finite reference values")
    exceed = int(np.count_nonzero(refs >= t_star))
    p = (exceed + 1) / (m + 1) if smoothing else exceed / m
    return TestResult(test, statistic, float(t_star), exceed, m, p, seed, tuple(flags), noise)


def observed_statistic(req: TestRequest) -> StatResult:
    """``t*`` from the noisy tables; expected counts also come from them."""
    lr = req.statistic is not StatisticKind.CHI2
    if req.test is TestKind.INDEPENDENCE:
        (nt,) = req.tables
        return (lr_independence if lr else chi2_independence)(nt, nt.noise.std)
    if req.test is TestKind.PROPORTIONS:
        nt, ns = req.tables
        return (lr_proportions if lr else chi2_proportions)(nt, ns, nt.n0, ns.n0, nt.noise.std)
    (nt,) = req.tables
    return (lr_gof if lr else chi2_gof)(nt, req.theta0, nt.n0, nt.noise.std)


def null_config(req: TestRequest) -> NullSamplerConfig:
    if req.test is TestKind.INDEPENDENCE:
        return independence_config(req.tables[0], req.statistic)
    if req.test is TestKind.PROPORTIONS:
        return proportions_config(req.tables[0], req.tables[1], req.statistic)
    nt = req.tables[0]
    return gof_config(req.theta0, nt.n0, nt.noise, req.statistic, req.gof_method)


def run_test(req: TestRequest) -> TestResult:
    """Run the full private test described by ``req``."""
    obs = observed_statistic(req)
    cfg = null_config(req)
    flags = list(obs.flags)
    if cfg.repaired:
        flags.append("theta_repaired")
    return monte_carlo_pvalue(
        obs.value,
        cfg.sample,
        req.m,
        req.seed,
        req.smoothing,
        req.threads,
        req.test.value,
        req.statistic.value,
        tuple(flags),
        req.tables[0].noise.to_dict(),
    )


def naive_js_pvalue(tables, test, statistic="lr", theta0=None) -> float:
    """Classical chi-squared p-value of the noisy statistic, ignoring the noise.

    This is the biased baseline: feed the noisy table to off-the-shelf
    software.  Kept for comparisons only.
    """
    test = TestKind.parse(test)
    statistic = StatisticKind.parse(statistic)
    tables = (tables,) if isinstance(tables, NoisyTable) else tuple(tables)
    lr = statistic is not StatisticKind.CHI2
    if test is TestKind.INDEPENDENCE:
        (nt,) = tables
        res = chi2_independence(nt)
        value = lr_uncorrected(nt.values, res.expected) if lr else res.value
        df = independence_df(nt.shape)
    elif test is TestKind.PROPORTIONS:
        nt, ns = tables
        res = chi2_proportions(nt, ns, nt.n0, ns.n0)
        x = np.concatenate([np.ravel(nt.values), np.ravel(ns.values)])
        value = lr_uncorrected(x, np.ravel(res.expected)) if lr else res.value
        df = nt.values.size - 1
    else:
        (nt,) = tables
        if theta0 is None:
            raise ValueError("goodness of fit needs theta0")
        th = as_theta(np.ravel(theta0))
        res = chi2_gof(nt, th, nt.n0)
        value = lr_uncorrected(np.ravel(nt.values), res.expected) if lr else res.value
        df = th.size - 1
    return classical_pvalue_chi2(max(value, 0.0), df)


def nonprivate_pvalue(value: float, df: int) -> float:
    """Asymptotic p-value of an exact-data statistic."""
    return classical_pvalue_chi2(value, df) if math.isfinite(value) else 0.0
