"""Quarterly time series: period arithmetic, growth transforms, CSV ingestion."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from enum import Enum

import numpy as np

_PERIOD_RE = re.compile(r"^(\d{4})Q([1-4])$")

CSV_HEADER = ("period", "series_id", "value")


class SeriesError(ValueError):
    """Malformed or inconsistent series data."""


class IngestError(SeriesError):
    """CSV ingestion failure; message names the offending row."""


@dataclass(frozen=True, order=True)
class Period:
    """A calendar quarter, ordered by (year, quarter)."""

    year: int
    quarter: int

    def __post_init__(self):
        if self.quarter not in (1, 2, 3, 4):
            raise SeriesError(f"quarter must be in 1..4, got {self.quarter}")

    @classmethod
    def parse(cls, token: str) -> "Period":
        m = _PERIOD_RE.match(token.strip())
        if not m:
            raise SeriesError(f"malformed period token {token!r} (expected YYYYQn)")
        return cls(int(m.group(1)), int(m.group(2)))

    @classmethod
    def from_index(cls, index: int) -> "Period":
        return cls(index // 4, index % 4 + 1)

    @property
    def index(self) -> int:
        """Quarters since 0Q1; the working integer representation."""
        return self.year * 4 + self.quarter - 1

    def successor(self) -> "Period":
        return Period.from_index(self.index + 1)

    def predecessor(self) -> "Period":
        return Period.from_index(self.index - 1)

    def __add__(self, quarters: int) -> "Period":
        if not isinstance(quarters, int):
            return NotImplemented
        return Period.from_index(self.index + quarters)

    def __sub__(self, other):
        """Period - Period gives quarters between; Period - int shifts back."""
        if isinstance(other, Period):
            return self.index - other.index
        if isinstance(other, int):
            return Period.from_index(self.index - other)
        return NotImplemented

    def __str__(self) -> str:
        return f"{self.year}Q{self.quarter}"


class Unit(str, Enum):
    YOY_PERCENT = "yoy_percent"
    QOQ_PERCENT = "qoq_percent"
    INDEX_LEVEL = "index_level"


@dataclass(frozen=True)
class Window:
    """Inclusive span of quarters."""

    start: Period
    end: Period

    def __post_init__(self):
        if self.end < self.start:
            raise SeriesError(f"window end {self.end} precedes start {self.start}")

    def __len__(self) -> int:
        return self.end - self.start + 1

    def __contains__(self, p: Period) -> bool:
        return self.start <= p <= self.end


class TimeSeries:
    """Contiguous quarterly observations for one named series.

    Contiguity holds by construction: observations are a start period plus a
    dense value array. Values are finite doubles; the array is frozen so
    instances can be shared across threads.
    """

    __slots__ = ("id", "unit", "start", "values")

    def __init__(self, id: str, unit: Unit, start: Period, values):
        arr = np.array(values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise SeriesError(f"series {id!r} needs a non-empty 1-d value array")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise SeriesError(f"series {id!r} has non-finite value at {start + bad}")
        arr.setflags(write=False)
        self.id = id
        self.unit = Unit(unit)
        self.start = start
        self.values = arr

    @classmethod
    def from_observations(cls, id: str, unit: Unit, observations) -> "TimeSeries":
        """Build from (Period, value) pairs, validating contiguity."""
        obs = list(observations)
        if not obs:
            raise SeriesError(f"series {id!r} has no observations")
        for (a, _), (b, _) in zip(obs, obs[1:]):
            if b.index != a.index + 1:
                raise SeriesError(f"series {id!r}: {b} does not follow {a}")
        return cls(id, unit, obs[0][0], [v for _, v in obs])

    def __len__(self) -> int:
        return self.values.size

    @property
    def end(self) -> Period:
        return self.start + (len(self) - 1)

    @property
    def span(self) -> Window:
        return Window(self.start, self.end)

    def periods(self) -> list[Period]:
        return [self.start + i for i in range(len(self))]

    def index_of(self, p: Period) -> int:
        i = p - self.start
        if not 0 <= i < len(self):
            raise SeriesError(f"period {p} outside series {self.id!r} span {self.start}..{self.end}")
        return i

    def value_at(self, p: Period) -> float:
        return float(self.values[self.index_of(p)])

    def up_to(self, origin: Period) -> "TimeSeries":
        """Observations at or before `origin`; the expanding-window view."""
        if origin < self.start:
            raise SeriesError(f"origin {origin} precedes series start {self.start}")
        stop = min(origin - self.start, len(self) - 1) + 1
        return TimeSeries(self.id, self.unit, self.start, self.values[:stop])

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.id, self.unit, self.start, values)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TimeSeries)
            and self.id == other.id
            and self.unit == other.unit
            and self.start == other.start
            and self.values.shape == other.values.shape
            and bool(np.all(self.values == other.values))
        )

    def __repr__(self) -> str:
        return f"TimeSeries({self.id!r}, {self.unit.value}, {self.start}..{self.end}, n={len(self)})"


def slice_series(s: TimeSeries, w: Window) -> tuple[TimeSeries, bool]:
    """Observations of `s` inside `w`. Returns (sliced, truncated).

    `truncated` is True when `w` extends past the data on either side.
    Empty intersection is an error.
    """
    lo = max(w.start, s.start)
    hi = min(w.end, s.end)
    if hi < lo:
        raise SeriesError(f"window {w.start}..{w.end} does not overlap series span {s.start}..{s.end}")
    truncated = w.start < s.start or s.end < w.end
    out = TimeSeries(s.id, s.unit, lo, s.values[lo - s.start : hi - s.start + 1])
    return out, truncated


def yoy_from_level(s: TimeSeries) -> TimeSeries:
    """Year-on-year growth in percent: 100 * (L_t / L_{t-4} - 1)."""
    return _growth_from_level(s, lag=4, unit=Unit.YOY_PERCENT)


def qoq_from_level(s: TimeSeries) -> TimeSeries:
    """Quarter-on-quarter growth in percent: 100 * (L_t / L_{t-1} - 1)."""
    return _growth_from_level(s, lag=1, unit=Unit.QOQ_PERCENT)


def _growth_from_level(s: TimeSeries, lag: int, unit: Unit) -> TimeSeries:
    if s.unit != Unit.INDEX_LEVEL:
        raise SeriesError(f"series {s.id!r} has unit {s.unit.value}, expected index_level")
    if len(s) < lag + 1:
        raise SeriesError(f"series {s.id!r} too short for lag-{lag} growth ({len(s)} observations)")
    denom = s.values[:-lag]
    if np.any(denom == 0.0):
        bad = int(np.flatnonzero(denom == 0.0)[0])
        raise SeriesError(f"level at {s.start + bad} is zero; growth undefined")
    growth = 100.0 * (s.values[lag:] / denom - 1.0)
    return TimeSeries(s.id, unit, s.start + lag, growth)


def levels_from_qoq(growth: TimeSeries, base_level: float) -> TimeSeries:
    """Rebuild a level path from qoq growth and the level one quarter before start."""
    factors = 1.0 + growth.values / 100.0
    levels = base_level * np.cumprod(factors)
    return TimeSeries(growth.id, Unit.INDEX_LEVEL, growth.start, levels)


def ingest_csv(data, unit: Unit = Unit.YOY_PERCENT) -> list[TimeSeries]:
    """Parse `period,series_id,value` CSV into one TimeSeries per series_id.

    Rows may interleave series and arrive unsorted; each series must cover a
    contiguous quarterly span with no duplicates. Errors cite the 1-based row
    number (header is row 1). Series are returned in order of first appearance.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IngestError(f"input is not UTF-8: {exc}") from None
    reader = csv.reader(io.StringIO(data))
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("no rows: input is empty") from None
    if tuple(h.strip().lower() for h in header) != CSV_HEADER:
        raise IngestError(f"row 1: header must be 'period,series_id,value', got {','.join(header)!r}")

    rows: dict[str, dict[int, tuple[float, int]]] = {}
    order: list[str] = []
    n_rows = 0
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        n_rows += 1
        if len(row) != 3:
            raise IngestError(f"row {lineno}: expected 3 fields, got {len(row)}")
        token, sid, raw = (field.strip() for field in row)
        try:
            period = Period.parse(token)
        except SeriesError as exc:
            raise IngestError(f"row {lineno}: {exc}") from None
        try:
            value = float(raw)
        except ValueError:
            raise IngestError(f"row {lineno}: value {raw!r} is not a number") from None
        if not np.isfinite(value):
            raise IngestError(f"row {lineno}: value {raw!r} is not finite")
        if not sid:
            raise IngestError(f"row {lineno}: empty series_id")
        if sid not in rows:
            rows[sid] = {}
            order.append(sid)
        if period.index in rows[sid]:
            first = rows[sid][period.index][1]
            raise IngestError(f"row {lineno}: duplicate ({period}, {sid!r}), first seen at row {first}")
        rows[sid][period.index] = (value, lineno)

    if n_rows == 0:
        raise IngestError("no rows: file has a header but no data")

    out = []
    for sid in order:
        by_index = rows[sid]
        indices = sorted(by_index)
        for prev, cur in zip(indices, indices[1:]):
            if cur != prev + 1:
                raise IngestError(
                    f"row {by_index[cur][1]}: gap in series {sid!r} between "
                    f"{Period.from_index(prev)} and {Period.from_index(cur)}"
                )
        start = Period.from_index(indices[0])
        out.append(TimeSeries(sid, unit, start, [by_index[i][0] for i in indices]))
    return out


def to_csv(series_list) -> str:
    """Emit series in the ingestion format, shortest round-trip float text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in series_list:
        for i, v in enumerate(s.values):
            writer.writerow([str(s.start + i), s.id, repr(float(v))])
    return buf.getvalue()
