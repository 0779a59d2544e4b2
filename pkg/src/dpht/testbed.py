"""Fixed-margin permutation testbed.

Row and column sums are treated as public.  Two tables are neighbours when
one record swaps its column attribute with another record's, which moves a
single unit around a rectangle of cells::

    T[i1, j1] - 1   T[i1, j2] + 1
    T[i2, j1] + 1   T[i2, j2] - 1

Under that neighbourhood a statistic ``h`` is released either by noising the
table (input perturbation, Laplace(4/epsilon) per cell) or by noising
``h(T)`` itself (output perturbation, Laplace(s_h/epsilon)).  The null
distribution comes from re-pairing row and column labels at random.

The testbed is a comparison tool; margins are not protected here.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .errors import (
    DegenerateMargins,
    NonPositiveEpsilon,
    NonPositiveSensitivity,
    TooLarge,
    UnsupportedShape,
)
from .noise import NoiseSpec, laplace_draws, laplace_scale
from .pvalue import DEFAULT_M, TestResult, monte_carlo_pvalue
from .stats import (
    StatisticKind,
    chi2_independence_batch,
    diff_batch,
    ll_batch,
    lr_independence_batch,
    round_clamp,
)
from .streams import resolve_seed, rng_for
from .tables import CountTable, NoisyTable

TABLE_MN_SENSITIVITY = 4.0
DIFF_SENSITIVITY = 4.0
BRUTE_FORCE_CAP = 10**6
# above this many records the batched urn draw would hold too much memory
_URN_BATCH_LIMIT = 2_000_000


@dataclass(frozen=True)
class Margins:
    """Row and column sums of a table; both must add up to the same ``n``."""

    row_sums: tuple[int, ...]
    col_sums: tuple[int, ...]

    def __post_init__(self):
        rows = tuple(int(x) for x in self.row_sums)
        cols = tuple(int(x) for x in self.col_sums)
        if not rows or not cols:
            raise ValueError("margins must be non-empty")
        if any(x < 0 for x in rows + cols):
            raise ValueError("margins must be nonnegative")
        if sum(rows) != sum(cols):
            raise ValueError(f"row sums total {sum(rows)} but column sums total {sum(cols)}")
        object.__setattr__(self, "row_sums", rows)
        object.__setattr__(self, "col_sums", cols)

    @classmethod
    def of(cls, t) -> Margins:
        t = t if isinstance(t, CountTable) else CountTable(t)
        return cls(tuple(t.row_sums), tuple(t.col_sums))

    @property
    def n(self) -> int:
        return sum(self.row_sums)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.row_sums), len(self.col_sums)

    @property
    def has_zero(self) -> bool:
        return 0 in self.row_sums or 0 in self.col_sums

    def positive(self) -> Margins:
        """The same margins without zero rows and columns."""
        return Margins(tuple(x for x in self.row_sums if x), tuple(x for x in self.col_sums if x))

    def to_dict(self) -> dict:
        return {"rows": list(self.row_sums), "cols": list(self.col_sums)}


@dataclass(frozen=True)
class SensitivityReport:
    statistic: str
    margins: Margins
    s_h: float
    branch: str
    brute_force: float | None = None
    flags: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "margins": self.margins.to_dict(),
            "s_h": self.s_h,
            "branch": self.branch,
            "brute_force": self.brute_force,
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# -- permutation null --------------------------------------------------------------


def permutation_null_batch(mg: Margins, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` tables with margins ``mg`` drawn from the permutation null.

    Each record gets its row label from one urn and its column label from a
    shuffled second urn; counting label pairs gives the table.
    """
    r, c = mg.shape
    n = mg.n
    if n == 0:
        return np.zeros((size, r, c), dtype=np.int64)
    if n * size <= _URN_BATCH_LIMIT:
        rows = np.repeat(np.arange(r), mg.row_sums)
        cols = np.repeat(np.arange(c), mg.col_sums)
        shuffled = rng.permuted(np.broadcast_to(cols, (size, n)), axis=1)
        cells = rows * c + shuffled + (np.arange(size) * (r * c))[:, None]
        return np.bincount(cells.ravel(), minlength=size * r * c).reshape(size, r, c)
    # sequential urn: row i takes R_i balls without replacement from what is left
    out = np.empty((size, r, c), dtype=np.int64)
    method = "count" if n < 10**6 else "marginals"
    for k in range(size):
        left = np.array(mg.col_sums, dtype=np.int64)
        for i, take in enumerate(mg.row_sums[:-1]):
            out[k, i] = rng.multivariate_hypergeometric(left, take, method=method)
            left -= out[k, i]
        out[k, -1] = left
    return out


def permutation_null_sample(mg: Margins, rng: np.random.Generator) -> CountTable:
    """One table from the permutation null with margins ``mg``."""
    return CountTable(permutation_null_batch(mg, rng, 1)[0])


# -- perturbation modes ------------------------------------------------------------


def mn_input_perturb(t: CountTable, epsilon: float, rng: np.random.Generator) -> NoisyTable:
    """Laplace(4/epsilon) on every cell; the table query has fixed-margin sensitivity 4."""
    spec = NoiseSpec.laplace(epsilon, TABLE_MN_SENSITIVITY)
    return NoisyTable(t.counts + spec.draw(rng, t.shape), t.n, spec, None, mechanism="mn")


def mn_output_perturb(stat_value: float, s_h: float, epsilon: float, rng: np.random.Generator) -> float:
    """``stat_value + Laplace(s_h/epsilon)``."""
    if not s_h > 0:
        raise NonPositiveSensitivity(f"s_h must be > 0, got {s_h}")
    b = laplace_scale(epsilon, s_h)
    if b == 0:
        return float(stat_value)
    return float(stat_value + laplace_draws(rng, b, (1,))[0])


# -- statistics on tables with fixed margins ---------------------------------------


def exact_statistic_batch(stat, t: np.ndarray) -> np.ndarray:
    """Statistic on integer tables with positive margins, ``0 log 0 = 0``."""
    stat = StatisticKind.parse(stat)
    t = np.asarray(t, dtype=np.float64)
    if stat is StatisticKind.LL:
        return ll_batch(t)
    if stat is StatisticKind.DIFF:
        return diff_batch(t)
    rs = t.sum(axis=-1, keepdims=True)
    cs = t.sum(axis=-2, keepdims=True)
    e = rs * cs / rs.sum(axis=-2, keepdims=True)
    if stat is StatisticKind.CHI2:
        return ((t - e) ** 2 / e).sum(axis=(-2, -1))
    return 2.0 * xlogy(t, t / e).sum(axis=(-2, -1))


def noisy_statistic_batch(stat, v: np.ndarray) -> np.ndarray:
    """Statistic on noisy tables; margins and expected counts come from the noisy values."""
    stat = StatisticKind.parse(stat)
    if stat is StatisticKind.CHI2:
        return chi2_independence_batch(v)
    if stat in (StatisticKind.LR, StatisticKind.LR_MODIFIED):
        return lr_independence_batch(v)
    if stat is StatisticKind.DIFF:
        return diff_batch(v)
    return ll_batch(round_clamp(v)[0])


# -- sensitivities -----------------------------------------------------------------


def _xlogx(x: float) -> float:
    return 0.0 if x == 0 else x * math.log(x)


def _f(x: float) -> float:
    return _xlogx(x) - _xlogx(x - 1)


def _g(x: float) -> float:
    return _xlogx(x + 1) - _xlogx(x)


def _sensitivity_2x2(stat: StatisticKind, mg: Margins) -> tuple[float, str]:
    (r1, r2), (c1, c2) = mg.row_sums, mg.col_sums
    n = mg.n
    first = r1 <= c1  # equivalent to r2 >= c2
    second = r1 <= c2  # equivalent to r2 >= c1
    branch = f"2x2:{'r1<=c1' if first else 'r1>c1'},{'r1<=c2' if second else 'r1>c2'}"
    if stat is StatisticKind.CHI2:
        k = n * n / (r1 * r2 * c1 * c2)
        u = k * abs(n - 2 * c2 * r1) if first else k * abs(n - 2 * c1 * r2)
        w = k * abs(n - 2 * c1 * r1) if second else k * abs(n - 2 * c2 * r2)
    elif stat is StatisticKind.LL:
        log = math.log
        u = abs(log(r2 - c2 + 1) - log(r1) - log(c2)) if first else abs(log(c2 - r2 + 1) - log(r2) - log(c1))
        w = abs(log(r1) + log(c1) - log(r2 - c1 + 1)) if second else abs(log(r2) + log(c2) - log(r1 - c2 + 1))
    else:
        u = 2 * abs(_f(r1) + _f(c2) - _f(r2 - c2 + 1)) if first else 2 * abs(_f(r2) + _f(c1) - _f(c2 - r2 + 1))
        w = 2 * abs(-_f(r1) - _f(c1) + _f(r2 - c1 + 1)) if second else 2 * abs(-_f(r2) - _f(c2) + _f(r1 - c2 + 1))
    return max(u, w), branch


def _sensitivity_rxc(stat: StatisticKind, mg: Margins) -> tuple[float, str]:
    rows, cols = mg.row_sums, mg.col_sums
    n = mg.n
    best, where = -math.inf, ""
    for i1, i2 in itertools.permutations(range(len(rows)), 2):
        for j1, j2 in itertools.permutations(range(len(cols)), 2):
            ri1, ri2, cj1, cj2 = rows[i1], rows[i2], cols[j1], cols[j2]
            a = min(ri1, cj1)
            d = min(ri2, cj2)
            b = min(ri1, cj2) - 1
            c = min(ri2, cj1) - 1
            if stat is StatisticKind.CHI2:
                k = n * n / (cj1 * cj2 * ri1 * ri2)
                v1 = k * abs(2 * (ri2 * cj2 * a + ri1 * cj1 * d) - (ri1 + ri2) * (cj1 + cj2)) / n
                v2 = k * abs((ri1 - ri2) * (cj1 - cj2) - 2 * (ri2 * cj1 * b + ri1 * cj2 * c)) / n
            elif stat is StatisticKind.LL:
                v1 = math.log(a * d)
                v2 = math.log((b + 1) * (c + 1))
            else:
                v1 = 2 * (_f(a) + _f(d))
                v2 = 2 * (_g(b) + _g(c))
            v = max(v1, v2)
            if v > best:
                best, where = v, f"rxc:i=({i1},{i2}),j=({j1},{j2}),{'ad' if v1 >= v2 else 'bc'}"
    return best, where


def _enumerate_tables(mg: Margins, cap: int) -> np.ndarray:
    rows, cols = mg.row_sums, mg.col_sums
    r, c = mg.shape
    found: list[tuple[int, ...]] = []

    def fill_row(j, left, room, acc):
        if j == c - 1:
            if left <= room[j]:
                yield acc + (left,)
            return
        for v in range(min(left, room[j]) + 1):
            yield from fill_row(j + 1, left - v, room, acc + (v,))

    def rec(i, room, acc):
        if i == r - 1:
            found.append(acc + tuple(room))
            if len(found) > cap:
                raise TooLarge(f"more than {cap} tables share these margins")
            return
        for row in fill_row(0, rows[i], room, ()):
            rec(i + 1, [x - y for x, y in zip(room, row)], acc + row)

    rec(0, list(cols), ())
    return np.array(found, dtype=np.int64).reshape(-1, r, c)


def brute_force_sensitivity(stat, mg: Margins, cap: int = BRUTE_FORCE_CAP) -> float:
    """Largest ``|h(T) - h(T')|`` over all neighbouring tables with margins ``mg``.

    Enumerates every table with these margins and applies each unit swap.
    Raises :class:`TooLarge` past ``cap`` tables.
    """
    stat = StatisticKind.parse(stat)
    mg = mg.positive()
    r, c = mg.shape
    if r < 2 or c < 2:
        return 0.0
    tabs = _enumerate_tables(mg, cap)
    h = exact_statistic_batch(stat, tabs)
    best = 0.0
    for i1, i2 in itertools.permutations(range(r), 2):
        for j1, j2 in itertools.permutations(range(c), 2):
            ok = (tabs[:, i1, j1] >= 1) & (tabs[:, i2, j2] >= 1)
            if not ok.any():
                continue
            u = tabs[ok].copy()
            u[:, i1, j1] -= 1
            u[:, i2, j2] -= 1
            u[:, i1, j2] += 1
            u[:, i2, j1] += 1
            best = max(best, float(np.abs(h[ok] - exact_statistic_batch(stat, u)).max()))
    return best


def sensitivity(stat, mg: Margins, brute_force: bool = False, cap: int = BRUTE_FORCE_CAP) -> SensitivityReport:
    """Fixed-margin sensitivity ``s_h`` of a testbed statistic.

    2x2 and r x c (both at least 3) tables use closed forms.  Other shapes
    fall back to enumeration, flagged ``brute_force_fallback``.  Zero rows or
    columns are dropped and flagged ``zero_margin``.
    """
    stat = StatisticKind.parse(stat)
    if stat is StatisticKind.LR_MODIFIED:
        stat = StatisticKind.LR
    flags: list[str] = []
    work = mg
    if mg.has_zero:
        flags.append("zero_margin")
        work = mg.positive()
    r, c = work.shape
    if (r < 2 or c < 2) and stat in (StatisticKind.CHI2, StatisticKind.LR):
        raise DegenerateMargins("chi2 and LR need at least two nonzero rows and columns")
    if stat is StatisticKind.DIFF:
        value, branch = DIFF_SENSITIVITY, "diff"
    elif r < 2 or c < 2:
        value, branch = 0.0, "no_neighbours"
    elif (r, c) == (2, 2):
        value, branch = _sensitivity_2x2(stat, work)
    elif r >= 3 and c >= 3:
        value, branch = _sensitivity_rxc(stat, work)
    else:
        try:
            value = brute_force_sensitivity(stat, work, cap)
        except TooLarge as exc:
            raise UnsupportedShape(
                f"no closed form for a {r}x{c} table and enumeration is infeasible"
            ) from exc
        branch = "brute_force"
        flags.append("brute_force_fallback")
    bf = None
    if brute_force:
        bf = value if branch == "brute_force" else brute_force_sensitivity(stat, work, cap)
    return SensitivityReport(stat.value, mg, float(value), branch, bf, tuple(flags))


# -- p-values ----------------------------------------------------------------------


def testbed_pvalue(
    t: CountTable,
    stat,
    mode: str = "input",
    epsilon: float = 1.0,
    m: int = DEFAULT_M,
    seed: int | None = None,
    threads: int = 1,
) -> TestResult:
    """Permutation-null p-value for a privately released statistic.

    ``mode="input"`` noises the table with Laplace(4/epsilon) per cell and
    computes the statistic from the noisy values.  ``mode="output"`` adds
    Laplace(s_h/epsilon) to the exact statistic.  Every pseudo-table goes
    through the same release with fresh noise.
    """
    stat = StatisticKind.parse(stat)
    if mode not in ("input", "output"):
        raise ValueError(f"mode must be 'input' or 'output', got {mode!r}")
    if not epsilon > 0:
        raise NonPositiveEpsilon(f"epsilon must be > 0, got {epsilon}")
    t = t if isinstance(t, CountTable) else CountTable(t)
    mg = Margins.of(t)
    seed = resolve_seed(seed)
    flags: list[str] = []

    if mode == "input":
        spec = NoiseSpec.laplace(epsilon, TABLE_MN_SENSITIVITY)

        def release(tabs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
            return noisy_statistic_batch(stat, tabs + spec.draw(rng, tabs.shape))

        if stat is StatisticKind.LL and not spec.is_identity:
            flags.append("rounded")
    else:
        report = sensitivity(stat, mg)
        flags.extend(report.flags)
        spec = NoiseSpec.laplace(epsilon, report.s_h) if report.s_h > 0 else NoiseSpec.none()

        def release(tabs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
            h = exact_statistic_batch(stat, tabs)
            return h + spec.draw(rng, h.shape)

    t_star = float(release(t.counts[None].astype(np.float64), rng_for(seed, "star"))[0])

    def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
        return release(permutation_null_batch(mg, rng, size).astype(np.float64), rng)

    noise = spec.to_dict() | {"mode": mode}
    return monte_carlo_pvalue(
        t_star, sampler, m, seed, False, threads, "testbed", stat.value, tuple(flags), noise
    )
