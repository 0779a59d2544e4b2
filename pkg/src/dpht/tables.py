"""Exact and privatized contingency tables, plus CSV/JSON ingestion.

One-dimensional tables are stored as ``1 x c``.  Counts are 64-bit integers;
the largest cells we handle (NYC taxi, ~7e7) leave plenty of headroom for
margin products, and every statistic moves to float64 before dividing.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from .errors import (
    EmptyInput,
    NegativeCount,
    NonIntegerCount,
    NonRectangular,
    TableError,
)

if TYPE_CHECKING:
    from .noise import NoiseSpec

THETA_SUM_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CountTable:
    """Exact table of nonnegative integer counts.

    Accepts any 1-D or 2-D array-like; 1-D input becomes a single row.
    The stored array is read-only so tables can be shared freely.
    """

    counts: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.counts)
        if raw.size == 0:
            raise EmptyInput("table has no cells")
        if raw.ndim == 1:
            raw = raw[np.newaxis, :]
        if raw.ndim != 2:
            raise NonRectangular(f"expected a 1-D or 2-D table, got {raw.ndim} dimensions")
        if raw.dtype.kind == "f":
            if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
                raise NonIntegerCount("counts must be whole numbers")
        elif raw.dtype.kind not in "iu":
            raise NonIntegerCount(f"unsupported count dtype {raw.dtype}")
        if np.any(raw < 0):
            raise NegativeCount("counts must be nonnegative")
        object.__setattr__(self, "counts", _frozen(raw.astype(np.int64)))

    @property
    def rows(self) -> int:
        return self.counts.shape[0]

    @property
    def cols(self) -> int:
        return self.counts.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def __eq__(self, other):
        if not isinstance(other, CountTable):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.counts, other.counts))

    def __hash__(self):
        return hash((self.shape, self.counts.tobytes()))

    def __repr__(self):
        return f"CountTable({self.counts.tolist()})"

    def to_dict(self) -> dict:
        return {"rows": self.rows, "cols": self.cols, "counts": self.counts.tolist()}


@dataclass(frozen=True, eq=False)
class NoisyTable:
    """Privatized table: real-valued cells plus the provenance of the noise.

    ``n0`` is the public table size.  It is never recomputed from the noisy
    values.  ``mechanism`` is ``"dp"`` for ordinary record-level privacy and
    ``"mn"`` for the fixed-margin testbed.
    """

    values: np.ndarray
    n0: int
    noise: NoiseSpec
    seed: int | None = None
    mechanism: str = "dp"
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.size == 0:
            raise EmptyInput("noisy table has no cells")
        if v.ndim == 1:
            v = v[np.newaxis, :]
        if v.ndim != 2:
            raise NonRectangular("noisy table must be 1-D or 2-D")
        if not np.all(np.isfinite(v)):
            raise TableError("noisy values must be finite")
        if int(self.n0) != self.n0 or self.n0 < 1:
            raise TableError(f"declared size n0 must be a positive integer, got {self.n0}")
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "n0", int(self.n0))
        object.__setattr__(self, "flags", tuple(self.flags))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, NoisyTable):
            return NotImplemented
        return (
            np.array_equal(self.values, other.values)
            and self.n0 == other.n0
            and self.noise == other.noise
            and self.seed == other.seed
            and self.mechanism == other.mechanism
        )

    def __hash__(self):
        return hash((self.values.tobytes(), self.n0, self.seed))

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "values": self.values.tolist(),
            "n0": self.n0,
            "noise": self.noise.to_dict(),
            "seed": self.seed,
            "mechanism": self.mechanism,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> NoisyTable:
        from .noise import NoiseSpec

        try:
            values = d["values"]
            n0 = d["n0"]
            noise = NoiseSpec.from_dict(d["noise"])
        except KeyError as exc:
            raise TableError(f"noisy table JSON is missing {exc}") from None
        out = cls(values, n0, noise, d.get("seed"), d.get("mechanism", "dp"), tuple(d.get("flags", ())))
        _check_dims(d, out.shape)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_dims(d: dict, shape: tuple[int, int]):
    rows, cols = d.get("rows"), d.get("cols")
    if (rows is not None and rows != shape[0]) or (cols is not None and cols != shape[1]):
        raise NonRectangular(f"declared dims {rows}x{cols} do not match data {shape[0]}x{shape[1]}")


# -- parsing -----------------------------------------------------------------


def _parse_int(token: str) -> int:
    token = token.strip()
    try:
        return int(token, 10)
    except ValueError:
        pass
    try:
        x = float(token)
    except ValueError:
        raise NonIntegerCount(f"not a number: {token!r}") from None
    if not math.isfinite(x) or x != int(x):
        raise NonIntegerCount(f"not an integer count: {token!r}")
    return int(x)


def parse_table(text: str, header: bool = False) -> CountTable:
    """Parse CSV text into a :class:`CountTable`.

    With ``header=True`` the first row and the first column are labels and
    are dropped.  Blank lines are ignored.

    >>> parse_table("238,262\\n265,235").n
    1000
    """
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if header:
        rows = [r[1:] for r in rows[1:]]
    if not rows or not rows[0]:
        raise EmptyInput("no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise NonRectangular(f"row {i} has {len(r)} fields, expected {width}")
    counts = [[_parse_int(tok) for tok in r] for r in rows]
    if any(c < 0 for r in counts for c in r):
        raise NegativeCount("counts must be nonnegative")
    return CountTable(np.array(counts, dtype=np.int64))


def serialize_table(t: CountTable) -> str:
    """CSV text for ``t``; ``parse_table(serialize_table(t)) == t``."""
    return "".join(",".join(str(int(x)) for x in row) + "\n" for row in t.counts)


def table_from_dict(d: dict) -> CountTable | NoisyTable:
    """Build a table from its JSON object; ``values`` marks a noisy table."""
    if "values" in d:
        return NoisyTable.from_dict(d)
    if "counts" not in d:
        raise TableError("table JSON needs 'counts' (exact) or 'values' (noisy)")
    t = CountTable(np.asarray(d["counts"]))
    _check_dims(d, t.shape)
    return t


def parse_json_table(text: str) -> CountTable | NoisyTable:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TableError(f"invalid JSON: {exc}") from None
    if not isinstance(d, dict):
        raise TableError("table JSON must be an object")
    return table_from_dict(d)


def read_table(path: str | Path, header: bool = False) -> CountTable | NoisyTable:
    """Read a CSV or JSON table file.  JSON is detected by content."""
    text = Path(path).read_text()
    return load_table_text(text, header=header)


def load_table_text(text: str, header: bool = False) -> CountTable | NoisyTable:
    if text.lstrip().startswith("{"):
        return parse_json_table(text)
    return parse_table(text, header=header)


def margins(t: CountTable) -> tuple[np.ndarray, np.ndarray, int]:
    """Exact integer ``(row_sums, col_sums, total)``."""
    return t.row_sums, t.col_sums, t.n


def as_theta(theta: Any, shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Validate a probability vector or matrix and return it as float64."""
    th = np.asarray(theta, dtype=np.float64)
    if shape is not None and th.shape != tuple(shape):
        raise TableError(f"theta has shape {th.shape}, expected {tuple(shape)}")
    if th.size == 0 or not np.all(np.isfinite(th)):
        raise TableError("theta must be a nonempty finite array")
    if np.any(th < 0):
        raise TableError("theta entries must be nonnegative")
    if abs(th.sum() - 1.0) > THETA_SUM_TOL:
        raise TableError(f"theta must sum to 1 (sum is {th.sum()!r})")
    return th


def values_of(t: Any) -> np.ndarray:
    """Float cell values of a table object or array-like."""
    if isinstance(t, NoisyTable):
        return np.asarray(t.values, dtype=np.float64)
    if isinstance(t, CountTable):
        return t.counts.astype(np.float64)
    return np.asarray(t, dtype=np.float64)
