"""Ingest, synthesize, align, and chronologically split sensor tables.

The central type is :class:`TimeTable`: a uniformly sampled, timestamp-indexed
table of named numeric columns plus the room-temperature target. Tables are
immutable; every operation returns a new one.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date

import numpy as np

from . import timebase
from .errors import (
    ConfigError,
    CoverageError,
    DataError,
    IntegrityError,
    ParseError,
    SchemaError,
    SplitError,
)
from .timebase import HolidayCalendar

#: Canonical name of the target column in CSV files.
TARGET_COLUMN = "RT"
TIMESTAMP_COLUMN = "timestamp"

# AR(1) coefficients of the synthetic generator. The target's coefficient is
# close to 1 so the series keeps the near-random-walk behaviour of slowly
# drifting room temperature.
_RT_AR = 0.995
_OUT_AR = 0.97
_OUT_INNOV_SD = 0.8
_HUMID_NOISE_SD = 4.0
_ONOFF_FLIP_RATE = 0.02

SYNTH_START = timebase.parse_instant("2017-12-08T00:00:00Z")


@dataclass(frozen=True)
class TimeTable:
    """Uniformly sampled table: timestamps, feature columns, target series.

    Parameters
    ----------
    timestamps : ndarray of int64
        UTC epoch seconds, strictly increasing with constant spacing.
    columns : dict of str -> ndarray of float64
        Feature columns, each the same length as ``timestamps``.
    target : ndarray of float64
        Room temperature at each instant.
    interval_seconds : int
        The constant spacing of ``timestamps``.
    """

    timestamps: np.ndarray
    columns: dict
    target: np.ndarray
    interval_seconds: int

    def __post_init__(self):
        ts = np.ascontiguousarray(np.asarray(self.timestamps, dtype=np.int64))
        tgt = np.ascontiguousarray(np.asarray(self.target, dtype=np.float64))
        cols = {
            name: np.ascontiguousarray(np.asarray(vals, dtype=np.float64))
            for name, vals in self.columns.items()
        }
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "target", tgt)
        object.__setattr__(self, "columns", cols)

        if ts.ndim != 1 or len(ts) == 0:
            raise DataError("a table needs at least one row")
        if self.interval_seconds <= 0:
            raise DataError(f"bad sampling interval {self.interval_seconds}")
        if len(ts) > 1:
            diffs = np.diff(ts)
            if not np.all(diffs == self.interval_seconds):
                bad = int(np.flatnonzero(diffs != self.interval_seconds)[0])
                raise IntegrityError(
                    "non-uniform sampling between "
                    f"{timebase.format_instant(ts[bad])} and "
                    f"{timebase.format_instant(ts[bad + 1])}"
                )
        if len(tgt) != len(ts):
            raise DataError("target length does not match timestamps")
        for name, vals in cols.items():
            if len(vals) != len(ts):
                raise DataError(f"column {name!r} length does not match timestamps")

    def __len__(self) -> int:
        return len(self.timestamps)

    def row_slice(self, start: int, stop: int) -> "TimeTable":
        """Contiguous row range as a new table."""
        return TimeTable(
            timestamps=self.timestamps[start:stop],
            columns={k: v[start:stop] for k, v in self.columns.items()},
            target=self.target[start:stop],
            interval_seconds=self.interval_seconds,
        )

    def with_column(self, name: str, values: np.ndarray) -> "TimeTable":
        """Copy of the table with ``name`` added or replaced."""
        cols = dict(self.columns)
        cols[name] = np.asarray(values, dtype=np.float64)
        return TimeTable(self.timestamps, cols, self.target, self.interval_seconds)


@dataclass(frozen=True)
class SplitSpec:
    """Chronological split boundaries; every boundary day is inclusive on the
    earlier side (the rows of ``train_end`` itself belong to train, etc.)."""

    data_start: date
    train_end: date
    val_end: date
    data_cutoff: date

    def __post_init__(self):
        order = (self.data_start, self.train_end, self.val_end, self.data_cutoff)
        if not (order[0] < order[1] < order[2] < order[3]):
            raise SplitError(
                "split dates must be strictly increasing "
                f"(got {', '.join(d.isoformat() for d in order)})"
            )


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the synthetic building-sensor generator."""

    seed: int = 42
    n_days: int = 365
    rt_base: float = 26.0
    seasonal_amp: float = 8.0
    daily_amp: float = 2.5
    holiday_shift: float = 1.0
    noise_sd: float = 0.25
    quantization: float = 0.5

    def __post_init__(self):
        if self.n_days < 1:
            raise ConfigError(f"n_days must be >= 1, got {self.n_days}")
        if self.quantization <= 0:
            raise ConfigError(f"quantization step must be > 0, got {self.quantization}")
        if self.noise_sd < 0:
            raise ConfigError(f"noise_sd must be >= 0, got {self.noise_sd}")


def _resolve_roles(header: list, schema: dict | None) -> dict:
    """Map header columns to roles; raise SchemaError on missing requirements."""
    if schema is None:
        if TIMESTAMP_COLUMN not in header:
            raise SchemaError(f"missing required column {TIMESTAMP_COLUMN!r}")
        if TARGET_COLUMN not in header:
            raise SchemaError(f"missing required column {TARGET_COLUMN!r}")
        return {
            name: (
                "timestamp"
                if name == TIMESTAMP_COLUMN
                else "target" if name == TARGET_COLUMN else "feature"
            )
            for name in header
        }

    roles = {}
    for name, role in schema.items():
        if role not in ("timestamp", "target", "feature", "ignore"):
            raise ConfigError(f"unknown role {role!r} for column {name!r}")
        if role != "ignore" and name not in header:
            raise SchemaError(f"missing required column {name!r}")
        roles[name] = role
    for name in header:
        roles.setdefault(name, "ignore")
    for required in ("timestamp", "target"):
        found = [n for n, r in roles.items() if r == required]
        if len(found) != 1:
            raise SchemaError(
                f"schema must declare exactly one {required} column, found {found}"
            )
    return roles


def ingest_csv(source, schema: dict | None = None) -> TimeTable:
    """Read a CSV file (path or text stream) into a validated TimeTable.

    Parameters
    ----------
    source : str, Path, or text file object
        CSV with a header row. The timestamp column must parse as ISO-8601;
        every other declared column must be numeric (empty cells become NaN
        and are rejected later, by the feature builder).
    schema : dict, optional
        Column-name -> role map with roles ``timestamp``, ``target``,
        ``feature``, ``ignore``. Default: column ``timestamp`` is the
        timestamp, ``RT`` the target, everything else a feature.

    Raises
    ------
    SchemaError, ParseError, IntegrityError, DataError
    """
    if hasattr(source, "read"):
        return _ingest_stream(source, schema)
    with open(source, newline="", encoding="utf-8") as fh:
        return _ingest_stream(fh, schema)


def _ingest_stream(fh, schema) -> TimeTable:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty file: no header row") from None
    header = [h.strip() for h in header]
    roles = _resolve_roles(header, schema)

    ts_idx = next(i for i, n in enumerate(header) if roles[n] == "timestamp")
    numeric_idx = [
        (i, n) for i, n in enumerate(header) if roles[n] in ("target", "feature")
    ]

    stamps, rows = [], []
    for rownum, row in enumerate(reader, start=1):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(
                f"row {rownum}: expected {len(header)} cells, got {len(row)}"
            )
        try:
            stamps.append(timebase.parse_instant(row[ts_idx]))
        except ParseError as exc:
            raise ParseError(f"row {rownum}: {exc}") from None
        vals = []
        for i, name in numeric_idx:
            cell = row[i].strip()
            if cell == "":
                vals.append(math.nan)
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"row {rownum}: non-numeric value {cell!r} in column {name!r}"
                ) from None
        rows.append(vals)

    if not rows:
        raise DataError("no data rows")
    if len(rows) < 2:
        raise DataError("need at least two rows to establish the sampling interval")

    ts = np.array(stamps, dtype=np.int64)
    data = np.array(rows, dtype=np.float64)
    order = np.argsort(ts, kind="stable")
    ts, data = ts[order], data[order]

    dup = np.flatnonzero(np.diff(ts) == 0)
    if dup.size:
        raise IntegrityError(
            f"duplicate timestamp {timebase.format_instant(ts[dup[0]])}"
        )
    interval = int(ts[1] - ts[0])

    columns, target = {}, None
    for j, (_, name) in enumerate(numeric_idx):
        if roles[name] == "target":
            target = data[:, j]
        else:
            columns[name] = data[:, j]
    return TimeTable(ts, columns, target, interval)


def write_csv(table: TimeTable, dest) -> None:
    """Write a table back to CSV (timestamp, features, target)."""
    close = False
    if not hasattr(dest, "write"):
        dest = open(dest, "w", newline="", encoding="utf-8")
        close = True
    try:
        writer = csv.writer(dest)
        names = list(table.columns)
        writer.writerow([TIMESTAMP_COLUMN, *names, TARGET_COLUMN])
        cols = [table.columns[n] for n in names]
        for i in range(len(table)):
            row = [timebase.format_instant(table.timestamps[i])]
            row.extend(repr(float(c[i])) for c in cols)
            row.append(repr(float(table.target[i])))
            writer.writerow(row)
    finally:
        if close:
            dest.close()


def align_state_change(events, grid) -> np.ndarray:
    """Forward-fill state-change events onto a regular timestamp grid.

    Parameters
    ----------
    events : sequence of (instant, value)
        Sorted by instant; the first event must be at or before ``grid[0]``.
    grid : ndarray of int64
        Target timestamps.

    Returns
    -------
    ndarray of float64
        For each grid instant, the value of the most recent event at or
        before it (last observation carried forward).
    """
    if len(events) == 0:
        raise CoverageError("empty event log")
    times = np.array([timebase.parse_instant(t) if isinstance(t, str) else int(t)
                      for t, _ in events], dtype=np.int64)
    values = np.array([float(v) for _, v in events], dtype=np.float64)
    if np.any(np.diff(times) < 0):
        raise DataError("event log is not sorted by instant")
    grid = np.asarray(grid, dtype=np.int64)
    if times[0] > grid[0]:
        raise CoverageError(
            "no event at or before the first grid instant "
            f"({timebase.format_instant(grid[0])})"
        )
    idx = np.searchsorted(times, grid, side="right") - 1
    return values[idx]


def split(
    table: TimeTable,
    spec: SplitSpec,
    utc_offset_hours: float = timebase.DEFAULT_UTC_OFFSET_HOURS,
) -> tuple:
    """Partition a table chronologically into (train, validation, test).

    Rows are assigned by their *local* calendar date. A boundary date belongs
    to the earlier partition; rows before ``data_start`` or after
    ``data_cutoff`` are dropped.
    """
    day = timebase.local_fields(table.timestamps, utc_offset_hours)["day"]
    edges = [
        timebase.day_number(spec.data_start),
        timebase.day_number(spec.train_end),
        timebase.day_number(spec.val_end),
        timebase.day_number(spec.data_cutoff),
    ]
    i0 = int(np.searchsorted(day, edges[0], side="left"))
    i1 = int(np.searchsorted(day, edges[1], side="right"))
    i2 = int(np.searchsorted(day, edges[2], side="right"))
    i3 = int(np.searchsorted(day, edges[3], side="right"))

    parts = []
    for name, lo, hi in (("train", i0, i1), ("validation", i1, i2), ("test", i2, i3)):
        if hi <= lo:
            raise SplitError(f"{name} partition is empty for the given dates")
        parts.append(table.row_slice(lo, hi))
    return tuple(parts)


def _ar1(innovations: np.ndarray, coeff: float) -> np.ndarray:
    out = np.empty_like(innovations)
    prev = 0.0
    for i, e in enumerate(innovations):
        prev = coeff * prev + e
        out[i] = prev
    return out


def synthesize(config: SynthConfig) -> TimeTable:
    """Generate a deterministic synthetic building-sensor table.

    Room temperature is a yearly sinusoid plus a daily sinusoid, shifted on
    holidays, plus AR(1) noise, quantized to the configured step. Exogenous
    columns (``OutTemp``, ``OutHumid``, ``OnOffState``, ``OpMode``) share the
    seasonal and diurnal drivers, so they correlate with the target without
    feeding into it directly; outdoor humidity is negatively coupled to
    outdoor temperature.
    """
    n = config.n_days * 86400 // timebase.SAMPLE_INTERVAL_SECONDS
    ts = SYNTH_START + np.arange(n, dtype=np.int64) * timebase.SAMPLE_INTERVAL_SECONDS
    rng = np.random.default_rng(config.seed)

    fields = timebase.local_fields(ts)
    local = (ts + timebase.offset_seconds(timebase.DEFAULT_UTC_OFFSET_HOURS)).astype(
        "datetime64[s]"
    )
    year_start = local.astype("datetime64[Y]").astype("datetime64[s]")
    doy = (local - year_start).astype(np.int64) / 86400.0
    hour_frac = fields["second_of_day"] / 3600.0

    yearly = np.cos(2 * np.pi * (doy - 197.0) / 365.25)
    daily_rt = np.cos(2 * np.pi * (hour_frac - 14.5) / 24.0)
    daily_out = np.cos(2 * np.pi * (hour_frac - 14.0) / 24.0)

    calendar = HolidayCalendar.default()
    holiday = calendar.mask(fields["day"])

    rt_noise = _ar1(rng.standard_normal(n) * config.noise_sd, _RT_AR)
    out_noise = _ar1(rng.standard_normal(n) * _OUT_INNOV_SD, _OUT_AR)
    humid_noise = rng.standard_normal(n) * _HUMID_NOISE_SD
    flips = rng.random(n) < _ONOFF_FLIP_RATE

    rt = (
        config.rt_base
        + config.seasonal_amp * yearly
        + config.daily_amp * daily_rt
        - config.holiday_shift * holiday
        + rt_noise
    )
    rt = np.round(rt / config.quantization) * config.quantization

    out_temp = 18.0 + 10.0 * yearly + 4.0 * daily_out + out_noise
    out_humid = np.clip(60.0 - 1.8 * (out_temp - 18.0) + humid_noise, 5.0, 100.0)

    working = (fields["hour"] >= 7) & (fields["hour"] < 19) & ~holiday
    onoff = (working ^ flips).astype(np.float64)

    # Operation mode follows the day's mean outdoor temperature:
    # heating below 14 degrees, cooling above 23, ventilation between.
    day_idx = fields["day"] - fields["day"][0]
    sums = np.bincount(day_idx, weights=out_temp)
    counts = np.bincount(day_idx)
    day_mean = (sums / counts)[day_idx]
    opmode = np.where(day_mean < 14.0, 1.0, np.where(day_mean > 23.0, 2.0, 0.0))

    columns = {
        "OnOffState": onoff,
        "OpMode": opmode,
        "OutTemp": out_temp,
        "OutHumid": out_humid,
    }
    return TimeTable(ts, columns, rt, timebase.SAMPLE_INTERVAL_SECONDS)
