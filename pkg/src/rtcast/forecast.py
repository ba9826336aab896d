"""Rolling multi-step forecasting with periodic true-value re-anchoring.

The deployed regime: true room temperature is read back periodically (every
``access_interval``, at local midnight by default). From each such anchor the
model predicts step by step out to ``horizon``, feeding every prediction back
into the MVART moving-average buffer, while exogenous columns (weather,
system states) are read from the table as a given scenario. Instants past the
horizon but before the next anchor are not scored.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import timebase
from .dataio import TimeTable
from .errors import ConfigError, DataError
from .features import EngineeringConfig, build_design_matrix, engineered_table, feature_order
from .gbm import Ensemble, HyperparamGrid, Hyperparams, grid_search, train
from .stats import MetricReport, metrics


@dataclass(frozen=True)
class ForecastRun:
    """Scored output of one rolling forecast."""

    access_interval_seconds: int
    horizon_seconds: int
    timestamps: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray
    anchor_ids: np.ndarray
    anchors: np.ndarray
    feature_names: tuple
    feature_rows: np.ndarray

    def __len__(self) -> int:
        return len(self.timestamps)

    def report(self) -> MetricReport:
        return metrics(self.y_true, self.y_pred)


def groups_for_model(model: Ensemble) -> frozenset:
    """Reconstruct the feature-group selection a model was trained with."""
    names = set(model.feature_names)
    groups = {"IOTS-MVA" if "OutTempMVA" in names else "IOTS"}
    if "MVART" in names:
        groups.add("MVART")
    if "Holiday" in names:
        groups.add("Holiday")
    return frozenset(groups)


def rolling_forecast(
    model: Ensemble,
    table: TimeTable,
    config: EngineeringConfig,
    access_interval_seconds: int = 86400,
    horizon_seconds: int = 28800,
    anchor_offset_seconds: int = 0,
    input_overrides: dict | None = None,
) -> ForecastRun:
    """Predict over a table in the rolling re-anchored regime.

    Parameters
    ----------
    model : Ensemble
    table : TimeTable
        Evaluation data; true RT is consumed only at anchors (and for
        scoring), exogenous columns are treated as known scenario inputs.
    config : EngineeringConfig
        Must match the training-time engineering (same window, offsets).
    access_interval_seconds : int
        Spacing of true-RT re-anchoring; anchors sit where local time is a
        multiple of this (offset by ``anchor_offset_seconds``), so the default
        86400 anchors at local midnight.
    horizon_seconds : int
        How far past each anchor to predict (and score).
    input_overrides : dict, optional
        Feature name -> constant: overrides the model's *input view* of those
        features at every step while the MVART recursion still propagates the
        model's own predictions (used by the frequency-response analysis in
        its rolling variant).

    Returns
    -------
    ForecastRun
    """
    step = table.interval_seconds
    if access_interval_seconds % step or horizon_seconds % step:
        raise ConfigError("access interval and horizon must be multiples of the sampling interval")
    if horizon_seconds < step:
        raise ConfigError("horizon must cover at least one step")
    if horizon_seconds > access_interval_seconds:
        raise ConfigError(
            f"horizon {horizon_seconds}s exceeds access interval {access_interval_seconds}s"
        )
    span = (len(table) - 1) * step
    if span < access_interval_seconds:
        raise ConfigError("table does not cover one access interval")

    names = model.feature_names
    groups = groups_for_model(model)
    if tuple(feature_order(groups)) != tuple(names):
        raise ConfigError(
            f"model features {names} do not form a recognized engineered set"
        )
    et = engineered_table(table, config, groups)
    static = np.column_stack([
        et.columns[n] if n != "MVART" else np.full(len(et), np.nan) for n in names
    ])
    use_mvart = "MVART" in names
    mvart_pos = names.index("MVART") if use_mvart else -1

    override_pos = {}
    if input_overrides:
        for key, val in input_overrides.items():
            if key not in names:
                raise ConfigError(f"override for unknown feature {key!r}")
            override_pos[names.index(key)] = float(val)

    local = table.timestamps + timebase.offset_seconds(config.utc_offset_hours)
    on_grid = (local - anchor_offset_seconds) % access_interval_seconds == 0
    anchor_idx = np.flatnonzero(on_grid)
    if use_mvart:
        anchor_idx = anchor_idx[anchor_idx >= config.mva_window - 1]
    if len(anchor_idx) == 0:
        raise DataError("no usable anchor instants in the table")

    w = config.mva_window
    h_steps = horizon_seconds // step
    n_rows = len(table)
    target = table.target

    ts_out, yt, yp, aid, rows_out = [], [], [], [], []
    for a_num, a in enumerate(anchor_idx):
        if use_mvart:
            buffer = list(target[a - w + 1 : a + 1])
        for k in range(1, h_steps + 1):
            t = a + k
            if t >= n_rows:
                break
            row = static[t].copy()
            if use_mvart:
                row[mvart_pos] = np.mean(buffer[-w:])
            for pos, val in override_pos.items():
                row[pos] = val
            pred = model.predict_row(row)
            if use_mvart:
                buffer.append(pred)
            ts_out.append(table.timestamps[t])
            yt.append(target[t])
            yp.append(pred)
            aid.append(a_num)
            rows_out.append(row)

    if not ts_out:
        raise DataError("no scored predictions: horizon never lands inside the table")
    return ForecastRun(
        access_interval_seconds=access_interval_seconds,
        horizon_seconds=horizon_seconds,
        timestamps=np.array(ts_out, dtype=np.int64),
        y_true=np.array(yt),
        y_pred=np.array(yp),
        anchor_ids=np.array(aid, dtype=np.int64),
        anchors=table.timestamps[anchor_idx],
        feature_names=names,
        feature_rows=np.array(rows_out),
    )


def horizon_sweep(
    model: Ensemble,
    table: TimeTable,
    config: EngineeringConfig,
    intervals_seconds,
) -> list:
    """Re-score one trained model at several predicting intervals.

    Each interval is used as both the access interval and the horizon, so a
    10-minute entry is one-step-ahead prediction and a 24-hour entry predicts
    a full day from each midnight anchor.

    Returns a list of dicts: interval_seconds, mse, mae, mape, r2.
    """
    intervals = list(intervals_seconds)
    if not intervals:
        raise ConfigError("no intervals to sweep")
    out = []
    for s in intervals:
        run = rolling_forecast(
            model, table, config,
            access_interval_seconds=int(s), horizon_seconds=int(s),
        )
        out.append({"interval_seconds": int(s), **run.report().as_dict()})
    return out


def window_sweep(
    train_table: TimeTable,
    val_table: TimeTable,
    widths_seconds,
    config: EngineeringConfig,
    params: Hyperparams,
    access_interval_seconds: int = 86400,
    horizon_seconds: int = 28800,
    grid: HyperparamGrid | None = None,
) -> list:
    """Train and evaluate one model per moving-average window width.

    Width 0 drops MVART and smoothing entirely ({IOTS, Holiday}); any other
    width uses the full pipeline ({IOTS-MVA, MVART, Holiday}) with that
    window for both the smoother and MVART. Models are evaluated with a
    rolling forecast on the validation table at the fixed horizon. When
    ``grid`` is given, each width is grid-searched independently; otherwise
    ``params`` is used as-is.

    Returns a list of dicts: width_seconds, mse, mae, mape, r2.
    """
    widths = list(widths_seconds)
    if not widths:
        raise ConfigError("no widths to sweep")
    step = train_table.interval_seconds
    out = []
    for w_sec in widths:
        w_sec = int(w_sec)
        if w_sec == 0:
            groups = frozenset({"IOTS", "Holiday"})
            cfg = replace(config, mva_window=1)
        else:
            if w_sec % step:
                raise ConfigError(f"width {w_sec}s is not a multiple of the sampling interval")
            groups = frozenset({"IOTS-MVA", "MVART", "Holiday"})
            cfg = replace(config, mva_window=w_sec // step)
        x_train = build_design_matrix(train_table, cfg, groups)
        if grid is not None:
            x_val = build_design_matrix(val_table, cfg, groups)
            chosen, _ = grid_search(x_train, x_val, grid)
        else:
            chosen = params
        model = train(x_train, chosen)
        run = rolling_forecast(
            model, val_table, cfg,
            access_interval_seconds=access_interval_seconds,
            horizon_seconds=horizon_seconds,
        )
        out.append({"width_seconds": w_sec, **run.report().as_dict()})
    return out
