"""Forecast datasets, exchangeable member groupings and rolling training windows.

The on-disk format is a UTF-8 CSV with header ``date,station,obs,m1,...,mM``.
Dates are ISO-8601 calendar dates, a missing observation is an empty field and
member ``m1`` is the control run by convention.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError, GroupingError, ParseError, SchemaError, WindowError

VARIABLE_KINDS = ("real_line", "nonnegative")


@dataclass(frozen=True)
class ForecastCase:
    date: dt.date
    station_id: str
    members: tuple
    observation: float = math.nan

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def missing(self) -> bool:
        return math.isnan(self.observation)

    def member_array(self) -> np.ndarray:
        return np.asarray(self.members, dtype=float)


def _parse_index_set(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _format_index_set(idx: Sequence[int]) -> str:
    idx = sorted(idx)
    runs = []
    start = prev = idx[0]
    for i in idx[1:]:
        if i == prev + 1:
            prev = i
            continue
        runs.append((start, prev))
        start = prev = i
    runs.append((start, prev))
    return ",".join(f"{a}" if a == b else f"{a}-{b}" for a, b in runs)


@dataclass(frozen=True)
class GroupingScheme:
    """Partition of member numbers ``1..M`` into exchangeable groups.

    Member numbers are 1-based as in the CSV header (``m1`` is member 1).
    """

    groups: tuple

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(i) for i in g)) for g in self.groups)
        if not groups:
            raise GroupingError("a grouping needs at least one group")
        seen: set[int] = set()
        for g in groups:
            if not g:
                raise GroupingError("every group must contain at least one member")
            overlap = seen.intersection(g)
            if overlap:
                raise GroupingError(f"members {sorted(overlap)} appear in more than one group")
            seen.update(g)
        M = len(seen)
        if seen != set(range(1, M + 1)):
            raise GroupingError(
                f"groups must cover members 1..{M} exactly; got {sorted(seen)}"
            )
        object.__setattr__(self, "groups", groups)

    @property
    def m(self) -> int:
        return len(self.groups)

    @property
    def n_members(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def sizes(self) -> tuple:
        return tuple(len(g) for g in self.groups)

    @property
    def member_group(self) -> np.ndarray:
        """0-based group index of every member column."""
        lab = np.empty(self.n_members, dtype=int)
        for k, g in enumerate(self.groups):
            lab[np.asarray(g) - 1] = k
        return lab

    def columns(self, k: int) -> np.ndarray:
        return np.asarray(self.groups[k]) - 1

    def check(self, members: np.ndarray) -> None:
        if members.shape[-1] != self.n_members:
            from .errors import ShapeError

            raise ShapeError(
                f"case has {members.shape[-1]} members but grouping expects {self.n_members}"
            )

    def canonical(self, members) -> np.ndarray:
        """Sort member values within each group, row by row.

        Fitting and scoring work on this canonical form so that permuting
        exchangeable members cannot change any floating-point summation.
        """
        a = np.array(members, dtype=float, copy=True)
        self.check(a)
        for k in range(self.m):
            cols = self.columns(k)
            if len(cols) > 1:
                a[..., cols] = np.sort(a[..., cols], axis=-1)
        return a

    def group_sums(self, members) -> np.ndarray:
        a = self.canonical(members)
        return np.stack([a[..., self.columns(k)].sum(axis=-1) for k in range(self.m)], axis=-1)

    def to_string(self) -> str:
        return "|".join(_format_index_set(g) for g in self.groups)

    @classmethod
    def from_string(cls, text: str) -> "GroupingScheme":
        try:
            return cls(tuple(_parse_index_set(p) for p in text.split("|")))
        except ValueError as exc:
            raise GroupingError(f"cannot parse grouping {text!r}: {exc}") from None


def make_grouping(kind: str, M: int, groups: Iterable[Iterable[int]] | None = None) -> GroupingScheme:
    """Build a grouping scheme.

    ``two_group`` puts the control (member 1) alone and all perturbed members
    together; ``three_group`` splits the perturbed members into odd- and
    even-numbered ones (perturbed member ``j`` is ensemble member ``j + 1``).
    ``custom`` validates explicit index sets.
    """
    if M < 2:
        raise GroupingError(f"need at least 2 members, got {M}")
    if kind == "two_group":
        return GroupingScheme(((1,), tuple(range(2, M + 1))))
    if kind == "three_group":
        if M < 3:
            raise GroupingError("three_group needs at least 3 members")
        odd = tuple(i for i in range(2, M + 1) if (i - 1) % 2 == 1)
        even = tuple(i for i in range(2, M + 1) if (i - 1) % 2 == 0)
        return GroupingScheme(((1,), odd, even))
    if kind == "custom":
        if groups is None:
            raise GroupingError("custom grouping requires explicit index sets")
        g = GroupingScheme(tuple(tuple(x) for x in groups))
        if g.n_members != M:
            raise GroupingError(f"custom grouping covers {g.n_members} members, expected {M}")
        return g
    if kind == "exchangeable":
        return GroupingScheme((tuple(range(1, M + 1)),))
    raise GroupingError(f"unknown grouping kind {kind!r}")


def parse_grouping(spec: str, M: int) -> GroupingScheme:
    """Grouping from a CLI/config string: a kind name or explicit ``1|2,3|4-5``."""
    spec = spec.strip()
    if spec in ("two_group", "three_group", "exchangeable"):
        return make_grouping(spec, M)
    g = GroupingScheme.from_string(spec)
    if g.n_members != M:
        raise GroupingError(f"grouping {spec!r} covers {g.n_members} members, data has {M}")
    return g


class Dataset:
    """Chronologically ordered forecast cases, at most one per (date, station).

    Arrays are read-only; ``obs`` holds NaN where the observation is missing.
    """

    def __init__(self, dates, stations, members, obs, variable_kind: str = "real_line"):
        if variable_kind not in VARIABLE_KINDS:
            raise SchemaError(f"unknown variable kind {variable_kind!r}")
        members = np.array(members, dtype=float)
        obs = np.array(obs, dtype=float).reshape(-1)
        dates = [d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d)) for d in dates]
        stations = [str(s) for s in stations]
        n = len(dates)
        if members.ndim != 2 or members.shape[0] != n or obs.shape[0] != n or len(stations) != n:
            raise SchemaError("dates, stations, members and obs must have matching lengths")
        if n and members.shape[1] < 2:
            raise SchemaError("at least 2 ensemble members are required")
        if not np.all(np.isfinite(members)):
            raise DataError("member values must be finite")
        if variable_kind == "nonnegative" and np.any(obs[~np.isnan(obs)] < 0):
            raise DataError("negative observation for a nonnegative variable")
        order = sorted(range(n), key=lambda i: (dates[i], stations[i]))
        self.dates = tuple(dates[i] for i in order)
        self.station_ids = tuple(stations[i] for i in order)
        self.members = members[order]
        self.obs = obs[order]
        self.members.setflags(write=False)
        self.obs.setflags(write=False)
        self.variable_kind = variable_kind
        for i in range(1, n):
            if self.dates[i] == self.dates[i - 1] and self.station_ids[i] == self.station_ids[i - 1]:
                raise DataError(
                    f"duplicate case for date {self.dates[i]} station {self.station_ids[i]}"
                )
        self.unique_dates = tuple(sorted(set(self.dates)))
        self.stations = tuple(sorted(set(self.station_ids)))
        self._date_slices = {}
        start = 0
        for i in range(1, n + 1):
            if i == n or self.dates[i] != self.dates[start]:
                self._date_slices[self.dates[start]] = slice(start, i)
                start = i

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def n_members(self) -> int:
        return self.members.shape[1]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.obs)

    def case(self, i: int) -> ForecastCase:
        return ForecastCase(
            self.dates[i], self.station_ids[i], tuple(float(v) for v in self.members[i]), float(self.obs[i])
        )

    @property
    def cases(self) -> list[ForecastCase]:
        return [self.case(i) for i in range(len(self))]

    def date_index(self, date: dt.date) -> np.ndarray:
        sl = self._date_slices.get(date)
        if sl is None:
            return np.empty(0, dtype=int)
        return np.arange(sl.start, sl.stop)

    @classmethod
    def from_cases(cls, cases: Sequence[ForecastCase], variable_kind: str = "real_line") -> "Dataset":
        return cls(
            [c.date for c in cases],
            [c.station_id for c in cases],
            [list(c.members) for c in cases],
            [c.observation for c in cases],
            variable_kind,
        )


DEFAULT_SCHEMA = {"date": "date", "station": "station", "obs": "obs", "members": None}


def load_dataset(source, schema: dict | None = None, variable_kind: str = "real_line") -> Dataset:
    """Read a delimited forecast table.

    ``source`` is a path or an open text stream. ``schema`` maps the logical
    columns ``date``, ``station``, ``obs`` to header names; ``members`` is a
    list of member column names in member order (default: every header of the
    form ``m<k>``, sorted by ``k``).
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return load_dataset(fh, schema, variable_kind)
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty input, no header row", line=1) from None
    pos = {h: i for i, h in enumerate(header)}
    for key in ("date", "station", "obs"):
        if schema[key] not in pos:
            raise SchemaError(f"missing column {schema[key]!r}")
    member_cols = schema["members"]
    if member_cols is None:
        numbered = [h for h in header if h[:1] == "m" and h[1:].isdigit()]
        member_cols = sorted(numbered, key=lambda h: int(h[1:]))
    missing_cols = [c for c in member_cols if c not in pos]
    if missing_cols:
        raise SchemaError(f"missing member columns {missing_cols}")
    if len(member_cols) < 2:
        raise SchemaError("at least 2 member columns are required")
    d_i, s_i, o_i = pos[schema["date"]], pos[schema["station"]], pos[schema["obs"]]
    m_i = [pos[c] for c in member_cols]

    dates, stations, members, obs = [], [], [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != len(header):
            raise SchemaError(
                f"line {line}: expected {len(header)} fields "
                f"({len(member_cols)} members), got {len(row)}"
            )
        try:
            date = dt.date.fromisoformat(row[d_i].strip())
        except ValueError:
            raise ParseError(f"bad date {row[d_i]!r}", line) from None
        station = row[s_i].strip()
        if not station:
            raise ParseError("empty station id", line)
        o = row[o_i].strip()
        try:
            y = float(o) if o else math.nan
            f = [float(row[i]) for i in m_i]
        except ValueError as exc:
            raise ParseError(str(exc), line) from None
        if not all(math.isfinite(v) for v in f):
            raise ParseError("missing or non-finite member value", line)
        if o and not math.isfinite(y):
            raise ParseError(f"non-finite observation {o!r}", line)
        if variable_kind == "nonnegative" and y < 0:
            raise ParseError(f"negative observation {y} for a nonnegative variable", line)
        dates.append(date)
        stations.append(station)
        members.append(f)
        obs.append(y)
    if not dates:
        return Dataset([], [], np.empty((0, len(member_cols))), [], variable_kind)
    return Dataset(dates, stations, members, obs, variable_kind)


def format_float(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def write_dataset(ds: Dataset, target) -> None:
    """Write ``ds`` in the ingestion format (lossless float repr)."""
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            write_dataset(ds, fh)
        return
    w = csv.writer(target, lineterminator="\n")
    w.writerow(["date", "station", "obs"] + [f"m{k}" for k in range(1, ds.n_members + 1)])
    for i in range(len(ds)):
        w.writerow(
            [ds.dates[i].isoformat(), ds.station_ids[i], format_float(ds.obs[i])]
            + [repr(float(v)) for v in ds.members[i]]
        )


def dataset_to_string(ds: Dataset) -> str:
    buf = io.StringIO()
    write_dataset(ds, buf)
    return buf.getvalue()


@dataclass(frozen=True)
class TrainingWindow:
    """Cases from the ``length_days`` most recent data dates before ``target_date``.

    ``members``/``obs`` hold only the cases with an observation (the ones that
    can enter a fit); ``n_cases`` counts every case on the window dates.
    """

    target_date: dt.date
    length_days: int
    dates: tuple
    case_index: np.ndarray = field(repr=False)
    members: np.ndarray = field(repr=False)
    obs: np.ndarray = field(repr=False)

    @property
    def n_cases(self) -> int:
        return len(self.case_index)

    @property
    def n_fit_cases(self) -> int:
        return len(self.obs)


def make_window(ds: Dataset, target_date: dt.date, dates: Sequence[dt.date]) -> TrainingWindow:
    idx = np.concatenate([ds.date_index(d) for d in dates]) if dates else np.empty(0, dtype=int)
    keep = idx[~np.isnan(ds.obs[idx])]
    mem = ds.members[keep]
    ob = ds.obs[keep]
    return TrainingWindow(target_date, len(dates), tuple(dates), idx, mem, ob)


def _eligible_history(ds: Dataset, target: dt.date, skip_days: int) -> list[dt.date]:
    cutoff = target - dt.timedelta(days=skip_days)
    return [d for d in ds.unique_dates if d < cutoff]


def earliest_start(ds: Dataset, length_days: int, skip_days: int = 0) -> dt.date | None:
    for d in ds.unique_dates:
        if len(_eligible_history(ds, d, skip_days)) >= length_days:
            return d
    return None


def window_plan(
    ds: Dataset,
    length_days: int,
    start: dt.date,
    end: dt.date | None = None,
    skip_days: int = 0,
) -> list[tuple[dt.date, tuple]]:
    """(target date, training dates) for every data date in ``[start, end]``.

    ``skip_days`` excludes training dates within that many calendar days of
    the target (0 uses every date strictly before the target).
    """
    if length_days < 1:
        raise WindowError(f"training length must be >= 1, got {length_days}")
    if skip_days < 0:
        raise WindowError("skip_days must be >= 0")
    targets = [d for d in ds.unique_dates if d >= start and (end is None or d <= end)]
    if not targets:
        raise WindowError(f"no data dates on or after {start}")
    plan = []
    for t in targets:
        hist = _eligible_history(ds, t, skip_days)
        if len(hist) < length_days:
            first = earliest_start(ds, length_days, skip_days)
            raise WindowError(
                f"target {t} has only {len(hist)} prior data dates, need {length_days}; "
                f"earliest feasible start is {first}",
                earliest_start=first,
            )
        plan.append((t, tuple(hist[-length_days:])))
    return plan


def rolling_windows(
    ds: Dataset,
    length_days: int,
    start: dt.date,
    end: dt.date | None = None,
    skip_days: int = 0,
) -> Iterator[tuple[TrainingWindow, list[ForecastCase]]]:
    """Yield ``(window, target cases)`` sliding one data date at a time."""
    for target, dates in window_plan(ds, length_days, start, end, skip_days):
        window = make_window(ds, target, dates)
        yield window, [ds.case(i) for i in ds.date_index(target)]
