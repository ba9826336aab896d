"""Feature engineering: smoothing, calendar/occupancy indicators, MVART.

The pipeline turns a raw :class:`~rtcast.dataio.TimeTable` into a
:class:`FeatureMatrix` whose rows feed the regressor. Feature *groups* mirror
the ablation vocabulary:

``IOTS``
    Raw indoor/outdoor/time/state features: OnOffState, OpMode, Quarter,
    Month, WeekDay, Hour, Occupancy, OutHumid, OutTemp.
``IOTS-MVA``
    Same, but with the outdoor sensor channels smoothed by a trailing moving
    average (columns OutHumidMVA / OutTempMVA).
``MVART``
    Trailing moving average of *past* room temperature — in oracle mode over
    true values, in rolling mode over a mix of true values up to the last
    anchor and self-predicted values after it.
``Holiday``
    Binary weekend/national-holiday indicator.

Setpoint temperature and Year are excluded from matrices unconditionally.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import timebase
from .dataio import TimeTable
from .errors import ConfigError, DataError, PipelineError, SelectionError
from .timebase import HolidayCalendar

GROUPS = ("IOTS", "IOTS-MVA", "MVART", "Holiday")

#: Column names that must never appear in a design matrix.
EXCLUDED_FEATURES = ("SetpointTemperature", "SPT", "Year")


@dataclass(frozen=True)
class EngineeringConfig:
    """Knobs of the feature-engineering pipeline."""

    mva_window: int = 6
    horizon_steps: int = 48
    holiday_calendar: HolidayCalendar = field(default_factory=HolidayCalendar.default)
    mvart_mode: str = "oracle"
    utc_offset_hours: float = timebase.DEFAULT_UTC_OFFSET_HOURS
    work_start_hour: int = 8
    work_end_hour: int = 18

    def __post_init__(self):
        if self.mva_window < 1:
            raise ConfigError(f"mva_window must be >= 1, got {self.mva_window}")
        if self.horizon_steps < 1:
            raise ConfigError(f"horizon_steps must be >= 1, got {self.horizon_steps}")
        if self.mvart_mode not in ("oracle", "rolling"):
            raise ConfigError(f"mvart_mode must be oracle or rolling, got {self.mvart_mode!r}")
        if not (0 <= self.work_start_hour < self.work_end_hour <= 24):
            raise ConfigError(
                f"bad working hours {self.work_start_hour}..{self.work_end_hour}"
            )


@dataclass(frozen=True)
class FeatureMatrix:
    """Design matrix: named columns, aligned target and timestamps."""

    feature_names: tuple
    rows: np.ndarray
    target: np.ndarray
    row_timestamps: np.ndarray

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float64))
        tgt = np.asarray(self.target, dtype=np.float64)
        ts = np.asarray(self.row_timestamps, dtype=np.int64)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "target", tgt)
        object.__setattr__(self, "row_timestamps", ts)

        if rows.ndim != 2 or rows.shape[1] != len(self.feature_names):
            raise DataError("rows shape does not match feature_names")
        if not (len(rows) == len(tgt) == len(ts)):
            raise DataError("rows, target, and timestamps must align")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("duplicate feature names")
        banned = set(self.feature_names) & set(EXCLUDED_FEATURES)
        if banned:
            raise DataError(f"excluded features present: {sorted(banned)}")

    def __len__(self) -> int:
        return len(self.rows)

    def index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise SelectionError(f"unknown feature {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.index(name)]


def moving_average(series, window: int) -> np.ndarray:
    """Trailing (causal) moving average with partial-window warm-up.

    The value at index ``i`` is the mean of the last ``window`` samples ending
    at ``i``; while fewer than ``window`` samples exist, the mean is over the
    ``i + 1`` available ones. Output length equals input length.

    Parameters
    ----------
    series : array-like of float
    window : int
        Number of samples, >= 1.
    """
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or len(x) == 0:
        raise DataError("series must be one-dimensional and non-empty")
    c = np.cumsum(x)
    out = np.empty_like(x)
    head = min(window - 1, len(x))
    out[:head] = c[:head] / np.arange(1, head + 1)
    if len(x) >= window:
        full = c[window - 1 :].copy()
        full[1:] -= c[: len(x) - window]
        out[window - 1 :] = full / window
    return out


def add_time_features(
    table: TimeTable, utc_offset_hours: float = timebase.DEFAULT_UTC_OFFSET_HOURS
) -> TimeTable:
    """Add local calendar columns Quarter, Month, WeekDay (Monday=1), Hour.

    Year is deliberately not added: it cannot generalize past the training
    period.
    """
    f = timebase.local_fields(table.timestamps, utc_offset_hours)
    out = table
    for name in ("Quarter", "Month", "WeekDay", "Hour"):
        out = out.with_column(name, f[name.lower()])
    return out


def add_holiday(
    table: TimeTable,
    calendar: HolidayCalendar,
    utc_offset_hours: float = timebase.DEFAULT_UTC_OFFSET_HOURS,
) -> TimeTable:
    """Add binary ``Holiday``: 1 on weekends and configured national holidays."""
    days = timebase.local_fields(table.timestamps, utc_offset_hours)["day"]
    return table.with_column("Holiday", calendar.mask(days).astype(np.float64))


def add_occupancy(
    table: TimeTable, work_start_hour: int = 8, work_end_hour: int = 18
) -> TimeTable:
    """Add binary ``Occupancy``: system on, non-holiday, within working hours."""
    for dep in ("OnOffState", "Hour", "Holiday"):
        if dep not in table.columns:
            raise PipelineError(f"occupancy needs column {dep!r}; add it first")
    hour = table.columns["Hour"]
    occ = (
        (table.columns["OnOffState"] == 1.0)
        & (table.columns["Holiday"] == 0.0)
        & (hour >= work_start_hour)
        & (hour < work_end_hour)
    )
    return table.with_column("Occupancy", occ.astype(np.float64))


def add_mvart(
    table: TimeTable, config: EngineeringConfig, predictions=None
) -> TimeTable:
    """Add ``MVART``: trailing mean of the previous ``mva_window`` RT samples.

    Strictly past values only — the sample at the row's own instant is never
    included. The first ``mva_window`` rows have no full history and are
    flagged NaN (the design-matrix builder drops them).

    In rolling mode, ``predictions`` must be supplied: an array aligned to the
    table where NaN means "use the true target at this index" and any other
    value is a self-predicted RT that replaces the true one. This lets the
    window mix true values up to an anchor instant with model predictions
    after it.
    """
    src = table.target.astype(np.float64, copy=True)
    if config.mvart_mode == "rolling":
        if predictions is None:
            raise ConfigError("rolling MVART needs a predictions array")
        pred = np.asarray(predictions, dtype=np.float64)
        if pred.shape != src.shape:
            raise DataError("predictions length does not match table")
        use = ~np.isnan(pred)
        src[use] = pred[use]
    elif predictions is not None:
        raise ConfigError("predictions are only meaningful in rolling mode")

    w = config.mva_window
    n = len(src)
    mvart = np.full(n, np.nan)
    if n > w:
        windows = np.lib.stride_tricks.sliding_window_view(src, w)
        mvart[w:] = windows[: n - w].mean(axis=1)
    return table.with_column("MVART", mvart)


def feature_order(feature_selection) -> tuple:
    """Canonical column order of the design matrix for a group selection."""
    groups = _check_groups(feature_selection)
    smoothed = "IOTS-MVA" in groups
    names = ["OnOffState", "OpMode", "Quarter", "Month", "WeekDay", "Hour", "Occupancy"]
    if "Holiday" in groups:
        names.append("Holiday")
    names.append("OutHumidMVA" if smoothed else "OutHumid")
    names.append("OutTempMVA" if smoothed else "OutTemp")
    if "MVART" in groups:
        names.append("MVART")
    return tuple(names)


def _check_groups(feature_selection) -> frozenset:
    groups = frozenset(feature_selection)
    unknown = groups - set(GROUPS)
    if unknown:
        raise SelectionError(
            f"unknown feature group(s) {sorted(unknown)}; known: {list(GROUPS)}"
        )
    if "IOTS" in groups and "IOTS-MVA" in groups:
        raise SelectionError("IOTS and IOTS-MVA are mutually exclusive")
    if "IOTS" not in groups and "IOTS-MVA" not in groups:
        raise SelectionError("selection needs one of IOTS or IOTS-MVA")
    return groups


def engineered_table(
    table: TimeTable, config: EngineeringConfig, feature_selection
) -> TimeTable:
    """Table with every static engineered column the selection needs.

    Everything except MVART: calendar fields, Holiday, Occupancy, and (for
    IOTS-MVA) the smoothed outdoor channels. The holiday column is always
    computed — occupancy depends on it — but only kept as a model feature
    when the ``Holiday`` group is selected.
    """
    groups = _check_groups(feature_selection)
    for dep in ("OnOffState", "OpMode", "OutTemp", "OutHumid"):
        if dep not in table.columns:
            raise PipelineError(f"input table is missing column {dep!r}")

    out = add_time_features(table, config.utc_offset_hours)
    out = add_holiday(out, config.holiday_calendar, config.utc_offset_hours)
    out = add_occupancy(out, config.work_start_hour, config.work_end_hour)
    if "IOTS-MVA" in groups:
        out = out.with_column(
            "OutHumidMVA", moving_average(out.columns["OutHumid"], config.mva_window)
        )
        out = out.with_column(
            "OutTempMVA", moving_average(out.columns["OutTemp"], config.mva_window)
        )
    return out


def build_design_matrix(
    table: TimeTable,
    config: EngineeringConfig,
    feature_selection,
    predictions=None,
) -> FeatureMatrix:
    """Assemble the model's design matrix for a feature-group selection.

    Each row's target is the RT at the row's own timestamp; multi-step
    forecasts come from applying the model recursively (see the forecast
    module). Warm-up rows (NaN MVART) are dropped; any other NaN in the
    selected columns is a data gap and raises.
    """
    names = feature_order(feature_selection)
    work = engineered_table(table, config, feature_selection)
    if "MVART" in names:
        work = add_mvart(work, config, predictions)

    rows = np.column_stack([work.columns[n] for n in names])
    start = config.mva_window if "MVART" in names else 0
    if start >= len(rows):
        raise DataError(
            f"table too short: {len(rows)} rows, {start} needed for MVART warm-up"
        )
    rows = rows[start:]
    target = work.target[start:]
    ts = work.timestamps[start:]

    bad = ~np.isfinite(rows)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DataError(
            f"missing value in column {names[j]!r} at "
            f"{timebase.format_instant(ts[i])}"
        )
    if not np.isfinite(target).all():
        i = int(np.flatnonzero(~np.isfinite(target))[0])
        raise DataError(f"missing target value at {timebase.format_instant(ts[i])}")
    return FeatureMatrix(names, rows, target, ts)
