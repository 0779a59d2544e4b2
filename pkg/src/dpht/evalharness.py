"""Experiments: null calibration (Q-Q / KS) and private vs non-private agreement.

Both experiments are reproducible bit for bit from their configuration and
seed.  Each trial or repetition draws from its own keyed substreams, so the
thread count never changes a result.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats as sps

from .errors import OutOfRange, UnknownFixture
from .noise import NoiseSpec, perturb_table, release_exact
from .nullsim import TestKind
from .pvalue import TestRequest, naive_js_pvalue, run_test
from .stats import StatisticKind
from .streams import child_seed, parallel_map, resolve_seed, rng_for
from .tables import CountTable, as_theta

_FIXTURES = {
    "election": [[238, 262], [265, 235]],
    "nyc_taxi": [
        [68685857, 46625277, 980220],
        [12711902, 10180961, 166088],
        [5232235, 5043192, 82001],
        [8941327, 6318250, 147051],
    ],
}

METHODS = ("ours", "naive_js")


def builtin_fixture(name: str) -> CountTable:
    """Bundled tables: ``"election"`` (2x2) and ``"nyc_taxi"`` (4x3)."""
    try:
        return CountTable(_FIXTURES[name])
    except KeyError:
        raise UnknownFixture(f"unknown fixture {name!r}; choose from {sorted(_FIXTURES)}") from None


def fixture_names() -> list[str]:
    return sorted(_FIXTURES)


def ks_uniform(pvalues) -> float:
    """Kolmogorov-Smirnov distance between the sample and Uniform(0, 1)."""
    p = np.asarray(pvalues, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError("need at least one p-value")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise OutOfRange("p-values must lie in [0, 1]")
    return float(sps.kstest(p, "uniform").statistic)


def _epsilon_text(eps: float) -> str | float:
    return "inf" if math.isinf(eps) else eps


# -- calibration -------------------------------------------------------------------


@dataclass(frozen=True)
class ReliabilityConfig:
    """One calibration setting.

    Independence draws tables with cell probabilities ``p_row[i] * p_col[j]``
    and ``n0`` records.  GOF and proportions draw from ``theta`` with ``n0``
    (and ``n2`` for the second proportions sample, defaulting to ``n0``).
    """

    test: str = "independence"
    n0: int = 1000
    epsilon: float = 0.2
    p_row: tuple[float, ...] = (0.5, 0.5)
    p_col: tuple[float, ...] = (0.5, 0.5)
    theta: tuple[float, ...] | None = None
    n2: int | None = None
    statistic: str = "chi2"
    trials: int = 2000
    m: int = 1000
    seed: int = 0
    method: str = "ours"
    sensitivity: float = 2.0

    def __post_init__(self):
        test = TestKind.parse(self.test)
        object.__setattr__(self, "test", test.value)
        object.__setattr__(self, "statistic", StatisticKind.parse(self.statistic).value)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.n0 < 1 or (self.n2 is not None and self.n2 < 1):
            raise ValueError("sample sizes must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if test is TestKind.INDEPENDENCE:
            as_theta(self.p_row)
            as_theta(self.p_col)
        elif self.theta is None:
            raise ValueError(f"{test.value} needs theta")
        else:
            as_theta(self.theta)

    @property
    def cell_probs(self) -> np.ndarray:
        if self.test == TestKind.INDEPENDENCE.value:
            return np.outer(self.p_row, self.p_col)
        return np.asarray(self.theta, dtype=np.float64)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["epsilon"] = _epsilon_text(self.epsilon)
        return d


@dataclass(frozen=True)
class QQSeries:
    """Sorted p-values against uniform quantiles ``(k - 0.5) / N``."""

    p_values: np.ndarray
    trials: np.ndarray
    uniform_quantiles: np.ndarray
    ks: float
    config: dict = field(default_factory=dict)

    @classmethod
    def from_pvalues(cls, pvalues, config: dict | None = None) -> QQSeries:
        p = np.asarray(pvalues, dtype=np.float64)
        order = np.argsort(p, kind="stable")
        q = (np.arange(p.size) + 0.5) / p.size
        return cls(p[order], order, q, ks_uniform(p), dict(config or {}))

    def thin(self, every: int = 400) -> QQSeries:
        """Every ``every``-th point, for plotting."""
        sl = slice(every - 1, None, every)
        return QQSeries(self.p_values[sl], self.trials[sl], self.uniform_quantiles[sl], self.ks, self.config)

    def rejection_rate(self, alpha: float = 0.05) -> float:
        return float(np.mean(self.p_values <= alpha))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "p_value", "uniform_quantile"])
        for k, p, q in zip(self.trials, self.p_values, self.uniform_quantiles):
            w.writerow([int(k), repr(float(p)), repr(float(q))])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "trials": int(self.p_values.size),
            "ks": self.ks,
            "rejection_rate_0.05": self.rejection_rate(0.05),
            "config": self.config,
        }


def _null_tables(cfg: ReliabilityConfig, rng: np.random.Generator) -> list[CountTable]:
    probs = cfg.cell_probs
    if cfg.test == TestKind.PROPORTIONS.value:
        n2 = cfg.n2 or cfg.n0
        return [CountTable(rng.multinomial(cfg.n0, probs)), CountTable(rng.multinomial(n2, probs))]
    flat = rng.multinomial(cfg.n0, probs.ravel())
    return [CountTable(flat.reshape(probs.shape))]


def reliability_trial(cfg: ReliabilityConfig, k: int) -> float:
    """p-value of trial ``k``: draw null data, privatize, test."""
    seed = cfg.seed
    exact = _null_tables(cfg, rng_for(seed, "table", k))
    spec = NoiseSpec.laplace(cfg.epsilon, cfg.sensitivity)
    noisy = [perturb_table(t, spec, child_seed(seed, "privatize", k, i)) for i, t in enumerate(exact)]
    theta0 = cfg.theta if cfg.test == TestKind.GOF.value else None
    if cfg.method == "naive_js":
        return naive_js_pvalue(noisy, cfg.test, cfg.statistic, theta0)
    req = TestRequest(cfg.test, tuple(noisy), cfg.statistic, theta0, cfg.m, child_seed(seed, "ref", k))
    return run_test(req).p_value


def reliability_experiment(cfg: ReliabilityConfig, threads: int = 1) -> QQSeries:
    """Run ``cfg.trials`` null trials and collect their p-values."""
    pvals = parallel_map(lambda k: reliability_trial(cfg, k), range(cfg.trials), threads)
    return QQSeries.from_pvalues(pvals, cfg.to_dict())


# -- agreement ---------------------------------------------------------------------


@dataclass(frozen=True)
class AgreementRow:
    epsilon: float
    statistic: str
    mean_p: float
    p10: float
    p90: float
    nonprivate_p: float
    p_values: tuple[float, ...] = ()


@dataclass(frozen=True)
class AgreementTable:
    rows: tuple[AgreementRow, ...]
    config: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epsilon", "statistic", "mean_p", "p10", "p90", "nonprivate_p"])
        for r in self.rows:
            w.writerow([_epsilon_text(r.epsilon), r.statistic, repr(r.mean_p), repr(r.p10), repr(r.p90), repr(r.nonprivate_p)])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = []
        for r in self.rows:
            d = asdict(r)
            d["epsilon"] = _epsilon_text(r.epsilon)
            d["p_values"] = list(r.p_values)
            rows.append(d)
        return json.dumps({"rows": rows, "config": self.config})


def agreement_experiment(
    tables,
    test="independence",
    statistics=("chi2", "lr"),
    epsilons=(math.inf,),
    repeats: int = 100,
    m: int = 10_000,
    seed: int | None = None,
    theta0=None,
    sensitivity: float = 2.0,
    threads: int = 1,
) -> AgreementTable:
    """Mean private p-value per epsilon next to the non-private p-value.

    Every repetition privatizes afresh but reuses one reference seed, and the
    non-private column uses that same seed on the exact data.  At
    ``epsilon = inf`` the two columns therefore agree exactly.
    """
    test = TestKind.parse(test)
    tables = [tables] if isinstance(tables, CountTable) else [t if isinstance(t, CountTable) else CountTable(t) for t in tables]
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    seed = resolve_seed(seed)
    ref_seed = child_seed(seed, "ref")
    exact = tuple(release_exact(t) for t in tables)

    rows = []
    for e_idx, eps in enumerate(epsilons):
        spec = NoiseSpec.laplace(eps, sensitivity)
        releases = [
            tuple(perturb_table(t, spec, child_seed(seed, "privatize", e_idx, k, i)) for i, t in enumerate(tables))
            for k in range(repeats)
        ]
        for stat in statistics:
            stat = StatisticKind.parse(stat)
            nonprivate = run_test(TestRequest(test, exact, stat, theta0, m, ref_seed)).p_value

            def one(noisy):
                return run_test(TestRequest(test, noisy, stat, theta0, m, ref_seed)).p_value

            ps = np.array(parallel_map(one, releases, threads))
            rows.append(
                AgreementRow(
                    float(eps),
                    stat.value,
                    float(ps.mean()),
                    float(np.percentile(ps, 10)),
                    float(np.percentile(ps, 90)),
                    nonprivate,
                    tuple(float(p) for p in ps),
                )
            )
    config = {
        "test": test.value,
        "statistics": [StatisticKind.parse(s).value for s in statistics],
        "epsilons": [_epsilon_text(float(e)) for e in epsilons],
        "repeats": repeats,
        "m": m,
        "seed": seed,
        "sensitivity": sensitivity,
    }
    return AgreementTable(tuple(rows), config)
