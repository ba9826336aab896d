"""Command-line pipeline: synth, ingest, split, train, evaluate, ablate,
explain, diagnose.

Every command reads a flat key=value config file (flags override file
values), writes its artifacts write-once into the output directory, and drops
a ``manifest_<command>.json`` listing each artifact with its SHA-256. Given
the same config and seed, every artifact is byte-identical across runs.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from . import dataio, explain, forecast, gbm, pffra, stats, timebase
from .dataio import SplitSpec, SynthConfig, TimeTable
from .errors import ConfigError, DataError, NumericError, ToolkitError
from .features import EngineeringConfig, build_design_matrix, feature_order
from .gbm import Ensemble, HyperparamGrid, Hyperparams
from .timebase import HolidayCalendar

SCHEMA_VERSION = 1

_DEFAULT_ABLATE_COMBOS = (
    "IOTS",
    "IOTS+Holiday",
    "IOTS+MVART",
    "IOTS+MVART+Holiday",
    "IOTS-MVA",
    "IOTS-MVA+Holiday",
    "IOTS-MVA+MVART",
    "IOTS-MVA+MVART+Holiday",
)

_KNOWN_KEYS = {
    "data.source", "data.csv", "data.schema",
    "synth.seed", "synth.days", "synth.rt_base", "synth.seasonal_amp",
    "synth.daily_amp", "synth.holiday_shift", "synth.noise_sd", "synth.quantization",
    "split.data_start", "split.train_end", "split.val_end", "split.data_cutoff",
    "features.groups", "features.mva_window", "features.horizon_steps",
    "features.utc_offset_hours", "features.work_start", "features.work_end",
    "features.holiday_file", "features.weekends_are_holidays",
    "model.max_depth", "model.n_trees", "model.gamma", "model.lambda",
    "model.learning_rate",
    "grid.max_depth", "grid.n_trees", "grid.gamma", "grid.lambda",
    "grid.learning_rate",
    "forecast.access_minutes", "forecast.horizon_minutes",
    "forecast.anchor_offset_minutes",
    "ablate.combos", "ablate.window_widths_minutes", "ablate.intervals_minutes",
    "explain.lambda", "explain.tree_depth", "explain.lime_samples",
    "diagnose.max_lag", "diagnose.bin_width",
}


def _parse_kv_file(path: str) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected key=value")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def _groups_from(text: str) -> frozenset:
    return frozenset(part.strip() for part in text.split("+") if part.strip())


@dataclass
class PipelineConfig:
    """Fully resolved run configuration (config file + flag overrides)."""

    out_dir: str = "runs"
    seed: int = 42
    quiet: bool = False
    source: str = "synth"
    csv_path: str | None = None
    schema_path: str | None = None
    synth: SynthConfig = field(default_factory=SynthConfig)
    split_spec: SplitSpec | None = None
    engineering: EngineeringConfig = field(default_factory=EngineeringConfig)
    groups: frozenset = frozenset({"IOTS-MVA", "MVART", "Holiday"})
    params: Hyperparams = field(default_factory=Hyperparams)
    grid: HyperparamGrid | None = None
    access_seconds: int = 86400
    horizon_seconds: int = 28800
    anchor_offset_seconds: int = 0
    ablate_combos: tuple = tuple(_groups_from(c) for c in _DEFAULT_ABLATE_COMBOS)
    window_widths_seconds: tuple = (0, 600, 3600, 21600, 86400)
    intervals_seconds: tuple = (600, 3600, 28800, 86400)
    explain_lambda: float = 1.0
    explain_tree_depth: int = 6
    lime_samples: int = 1000
    max_lag: int = 30
    bin_width: float = 1.0
    raw: dict = field(default_factory=dict)


def _build_config(args) -> PipelineConfig:
    kv = {}
    if args.config:
        kv = _parse_kv_file(args.config)
        unknown = set(kv) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")

    def get(key, default=None):
        return kv.get(key, default)

    def get_int(key, default):
        v = get(key)
        try:
            return int(v) if v is not None else default
        except ValueError:
            raise ConfigError(f"config {key} must be an integer, got {v!r}") from None

    def get_float(key, default):
        v = get(key)
        try:
            return float(v) if v is not None else default
        except ValueError:
            raise ConfigError(f"config {key} must be a number, got {v!r}") from None

    def get_list(key, cast):
        v = get(key)
        if v is None:
            return None
        try:
            return tuple(cast(part.strip()) for part in v.split(",") if part.strip())
        except ValueError:
            raise ConfigError(f"config {key} has a malformed list: {v!r}") from None

    cfg = PipelineConfig(raw=dict(kv))
    cfg.seed = args.seed if args.seed is not None else get_int("synth.seed", 42)
    cfg.out_dir = args.out
    cfg.quiet = args.quiet

    cfg.source = get("data.source", "synth")
    if cfg.source not in ("synth", "csv"):
        raise ConfigError(f"data.source must be synth or csv, got {cfg.source!r}")
    cfg.csv_path = get("data.csv")
    cfg.schema_path = get("data.schema")
    if cfg.source == "csv" and not cfg.csv_path:
        raise ConfigError("data.source=csv needs data.csv=<path>")

    days = get_int("synth.days", 365)
    if getattr(args, "days", None) is not None:
        days = args.days
    cfg.synth = SynthConfig(
        seed=cfg.seed,
        n_days=days,
        rt_base=get_float("synth.rt_base", 26.0),
        seasonal_amp=get_float("synth.seasonal_amp", 8.0),
        daily_amp=get_float("synth.daily_amp", 2.5),
        holiday_shift=get_float("synth.holiday_shift", 1.0),
        noise_sd=get_float("synth.noise_sd", 0.25),
        quantization=get_float("synth.quantization", 0.5),
    )

    split_keys = ["split.data_start", "split.train_end", "split.val_end", "split.data_cutoff"]
    present = [k for k in split_keys if k in kv]
    if present and len(present) != 4:
        raise ConfigError("either give all four split.* dates or none")
    if present:
        cfg.split_spec = SplitSpec(
            data_start=timebase.parse_day(kv["split.data_start"]),
            train_end=timebase.parse_day(kv["split.train_end"]),
            val_end=timebase.parse_day(kv["split.val_end"]),
            data_cutoff=timebase.parse_day(kv["split.data_cutoff"]),
        )

    holiday_file = get("features.holiday_file")
    weekends = get("features.weekends_are_holidays", "true").lower() != "false"
    if holiday_file:
        calendar = HolidayCalendar.from_file(holiday_file, include_weekends=weekends)
    else:
        calendar = HolidayCalendar.default()
        if not weekends:
            calendar = HolidayCalendar(dates=calendar.dates, include_weekends=False)
    cfg.engineering = EngineeringConfig(
        mva_window=get_int("features.mva_window", 6),
        horizon_steps=get_int("features.horizon_steps", 48),
        holiday_calendar=calendar,
        utc_offset_hours=get_float("features.utc_offset_hours", 2.0),
        work_start_hour=get_int("features.work_start", 8),
        work_end_hour=get_int("features.work_end", 18),
    )
    groups_text = getattr(args, "groups", None) or get("features.groups")
    if groups_text:
        cfg.groups = _groups_from(groups_text)

    cfg.params = Hyperparams(
        max_depth=get_int("model.max_depth", 6),
        n_trees=get_int("model.n_trees", 100),
        gamma=get_float("model.gamma", 0.0),
        lambda_=get_float("model.lambda", 1.0),
        learning_rate=get_float("model.learning_rate", 0.3),
    )
    if any(k.startswith("grid.") for k in kv):
        base = HyperparamGrid()
        cfg.grid = HyperparamGrid(
            max_depth=get_list("grid.max_depth", int) or base.max_depth,
            n_trees=get_list("grid.n_trees", int) or base.n_trees,
            gamma=get_list("grid.gamma", float) or base.gamma,
            lambda_=get_list("grid.lambda", float) or base.lambda_,
            learning_rate=get_list("grid.learning_rate", float) or base.learning_rate,
        )

    cfg.access_seconds = get_int("forecast.access_minutes", 1440) * 60
    cfg.horizon_seconds = get_int("forecast.horizon_minutes", 480) * 60
    cfg.anchor_offset_seconds = get_int("forecast.anchor_offset_minutes", 0) * 60

    combos = get("ablate.combos")
    if combos:
        cfg.ablate_combos = tuple(
            _groups_from(part) for part in combos.split(";") if part.strip()
        )
    widths = get_list("ablate.window_widths_minutes", int)
    if widths is not None:
        cfg.window_widths_seconds = tuple(w * 60 for w in widths)
    intervals = get_list("ablate.intervals_minutes", int)
    if intervals is not None:
        cfg.intervals_seconds = tuple(i * 60 for i in intervals)

    cfg.explain_lambda = get_float("explain.lambda", 1.0)
    cfg.explain_tree_depth = get_int("explain.tree_depth", 6)
    cfg.lime_samples = get_int("explain.lime_samples", 1000)
    cfg.max_lag = get_int("diagnose.max_lag", 30)
    cfg.bin_width = get_float("diagnose.bin_width", 1.0)
    return cfg


class ArtifactWriter:
    """Write-once artifact store with a deterministic manifest."""

    def __init__(self, out_dir: str, command: str, config: PipelineConfig):
        self.out_dir = out_dir
        self.command = command
        self.config = config
        self.artifacts = []
        os.makedirs(out_dir, exist_ok=True)

    def _emit(self, name: str, data: bytes):
        path = os.path.join(self.out_dir, name)
        if os.path.exists(path):
            raise ConfigError(f"refusing to overwrite existing artifact {path}")
        with open(path, "wb") as fh:
            fh.write(data)
        self.artifacts.append(
            {"path": name, "sha256": hashlib.sha256(data).hexdigest()}
        )
        if not self.config.quiet:
            print(f"wrote {path}")

    def write_json(self, name: str, obj) -> None:
        doc = {"schema_version": SCHEMA_VERSION, **obj}
        self._emit(name, (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode())

    def write_csv(self, name: str, header, rows) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
        self._emit(name, buf.getvalue().encode())

    def write_table(self, name: str, table: TimeTable) -> None:
        buf = io.StringIO()
        dataio.write_csv(table, buf)
        self._emit(name, buf.getvalue().encode())

    def finish(self, extra: dict | None = None) -> None:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "seed": self.config.seed,
            "config": dict(sorted(self.config.raw.items())),
            "artifacts": sorted(self.artifacts, key=lambda a: a["path"]),
        }
        if extra:
            doc.update(extra)
        data = (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode()
        self._emit(f"manifest_{self.command}.json", data)


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


def _load_schema(path: str) -> dict:
    schema = {}
    for key, val in _parse_kv_file(path).items():
        schema[key] = val
    return schema


def _load_table(cfg: PipelineConfig) -> TimeTable:
    if cfg.source == "synth":
        return dataio.synthesize(cfg.synth)
    schema = _load_schema(cfg.schema_path) if cfg.schema_path else None
    return dataio.ingest_csv(cfg.csv_path, schema)


def _split_table(cfg: PipelineConfig, table: TimeTable):
    if cfg.split_spec is not None:
        return dataio.split(table, cfg.split_spec, cfg.engineering.utc_offset_hours)
    n = len(table)
    i1, i2 = int(n * 0.6), int(n * 0.8)
    if not (0 < i1 < i2 < n):
        raise DataError(f"table too short to split 60/20/20: {n} rows")
    return (
        table.row_slice(0, i1),
        table.row_slice(i1, i2),
        table.row_slice(i2, n),
    )


def _metric_row(first, report) -> list:
    return [first, report.mse, report.mae, report.mape, report.r2]


def _forecast_rows(run) -> list:
    return [
        (
            timebase.format_instant(run.timestamps[i]),
            repr(float(run.y_true[i])),
            repr(float(run.y_pred[i])),
            int(run.anchor_ids[i]),
        )
        for i in range(len(run))
    ]


def _adf_doc(result: stats.AdfResult) -> dict:
    return {
        "statistic": result.statistic,
        "used_lags": result.used_lags,
        "reject_at": {f"{int(level * 100)}%": bool(v) for level, v in result.reject_at.items()},
        "p_bracket": list(result.p_bracket),
    }


def _require_model(path: str) -> Ensemble:
    if not path or not os.path.exists(path):
        raise ConfigError(f"model file not found: {path!r} (train first or pass --model)")
    return gbm.load(path)


def cmd_synth(cfg: PipelineConfig, args) -> None:
    table = dataio.synthesize(cfg.synth)
    out = ArtifactWriter(cfg.out_dir, "synth", cfg)
    out.write_table("synthetic.csv", table)
    out.finish(extra={"rows": len(table)})


def cmd_ingest(cfg: PipelineConfig, args) -> None:
    if args.csv:
        cfg.csv_path, cfg.source = args.csv, "csv"
    if args.schema:
        cfg.schema_path = args.schema
    if not cfg.csv_path:
        raise ConfigError("ingest needs --csv PATH or data.csv in the config")
    schema = _load_schema(cfg.schema_path) if cfg.schema_path else None
    table = dataio.ingest_csv(cfg.csv_path, schema)
    out = ArtifactWriter(cfg.out_dir, "ingest", cfg)
    out.write_table("normalized.csv", table)
    out.write_json(
        "ingest_report.json",
        {
            "rows": len(table),
            "interval_seconds": table.interval_seconds,
            "columns": sorted(table.columns),
            "start": timebase.format_instant(table.timestamps[0]),
            "end": timebase.format_instant(table.timestamps[-1]),
        },
    )
    out.finish()


def cmd_split(cfg: PipelineConfig, args) -> None:
    table = _load_table(cfg)
    train_t, val_t, test_t = _split_table(cfg, table)
    out = ArtifactWriter(cfg.out_dir, "split", cfg)
    out.write_table("train.csv", train_t)
    out.write_table("val.csv", val_t)
    out.write_table("test.csv", test_t)
    out.write_json(
        "split_report.json",
        {
            "rows": {"train": len(train_t), "val": len(val_t), "test": len(test_t)},
            "boundaries": {
                "train": [timebase.format_instant(train_t.timestamps[0]),
                          timebase.format_instant(train_t.timestamps[-1])],
                "val": [timebase.format_instant(val_t.timestamps[0]),
                        timebase.format_instant(val_t.timestamps[-1])],
                "test": [timebase.format_instant(test_t.timestamps[0]),
                         timebase.format_instant(test_t.timestamps[-1])],
            },
        },
    )
    out.finish()


def _params_doc(params: Hyperparams) -> dict:
    return {
        "max_depth": params.max_depth,
        "n_trees": params.n_trees,
        "gamma": params.gamma,
        "lambda": params.lambda_,
        "learning_rate": params.learning_rate,
    }


def cmd_train(cfg: PipelineConfig, args) -> None:
    table = _load_table(cfg)
    train_t, val_t, _ = _split_table(cfg, table)
    x_train = build_design_matrix(train_t, cfg.engineering, cfg.groups)
    x_val = build_design_matrix(val_t, cfg.engineering, cfg.groups)

    out = ArtifactWriter(cfg.out_dir, "train", cfg)
    params = cfg.params
    if cfg.grid is not None:
        params, score_table = gbm.grid_search(x_train, x_val, cfg.grid)
        out.write_csv(
            "grid_scores.csv",
            ["max_depth", "n_trees", "gamma", "lambda", "learning_rate",
             "mse", "mae", "mape", "r2"],
            [
                [p.max_depth, p.n_trees, p.gamma, p.lambda_, p.learning_rate,
                 rep.mse, rep.mae, rep.mape, rep.r2]
                for p, rep in score_table
            ],
        )
    model = gbm.train(x_train, params)

    doc = gbm.to_dict(model)
    out._emit("model.json", (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode())
    out.write_json("params.json", {
        "params": _params_doc(params),
        "groups": sorted(cfg.groups),
        "mva_window": cfg.engineering.mva_window,
        "grid_searched": cfg.grid is not None,
    })
    out.write_json("metrics_fit_train.json",
                   stats.metrics(x_train.target, model.predict_batch(x_train.rows)).as_dict())
    out.write_json("metrics_fit_val.json",
                   stats.metrics(x_val.target, model.predict_batch(x_val.rows)).as_dict())
    out.finish(extra={"n_features": len(model.feature_names)})


def cmd_evaluate(cfg: PipelineConfig, args) -> None:
    model = _require_model(args.model)
    table = _load_table(cfg)
    parts = dict(zip(("train", "val", "test"), _split_table(cfg, table)))

    out = ArtifactWriter(cfg.out_dir, "evaluate", cfg)
    runs = {}
    for name, part in parts.items():
        run = forecast.rolling_forecast(
            model, part, cfg.engineering,
            access_interval_seconds=cfg.access_seconds,
            horizon_seconds=cfg.horizon_seconds,
            anchor_offset_seconds=cfg.anchor_offset_seconds,
        )
        runs[name] = run
        out.write_csv(
            f"forecast_{name}.csv",
            ["timestamp", "y_true", "y_pred", "anchor_id"],
            _forecast_rows(run),
        )
        out.write_json(f"metrics_{name}.json", run.report().as_dict())

    test_run = runs["test"]
    residuals = test_run.y_true - test_run.y_pred
    out.write_csv(
        "residuals_test.csv",
        ["timestamp", "residual"],
        [
            (timebase.format_instant(t), repr(float(r)))
            for t, r in zip(test_run.timestamps, residuals)
        ],
    )
    out.write_csv(
        "residual_hist_test.csv",
        ["bin", "count"],
        stats.histogram(residuals, cfg.bin_width * 0.25),
    )
    out.write_csv(
        "qq_test.csv",
        ["theoretical", "sample"],
        stats.qq_normal(residuals),
    )
    out.finish()


def cmd_ablate(cfg: PipelineConfig, args) -> None:
    table = _load_table(cfg)
    train_t, val_t, _ = _split_table(cfg, table)
    out = ArtifactWriter(cfg.out_dir, "ablate", cfg)

    rows = []
    for combo in cfg.ablate_combos:
        x_train = build_design_matrix(train_t, cfg.engineering, combo)
        model = gbm.train(x_train, cfg.params)
        run = forecast.rolling_forecast(
            model, val_t, cfg.engineering,
            access_interval_seconds=cfg.access_seconds,
            horizon_seconds=cfg.horizon_seconds,
        )
        rows.append(_metric_row("+".join(sorted(combo)), run.report()))
    out.write_csv("ablation.csv", ["group", "mse", "mae", "mape", "r2"], rows)

    if not args.skip_sweeps:
        sweep = forecast.window_sweep(
            train_t, val_t, cfg.window_widths_seconds, cfg.engineering, cfg.params,
            access_interval_seconds=cfg.access_seconds,
            horizon_seconds=cfg.horizon_seconds,
            grid=cfg.grid,
        )
        out.write_csv(
            "window_sweep.csv",
            ["width_or_interval", "mse", "mae", "mape", "r2"],
            [[r["width_seconds"], r["mse"], r["mae"], r["mape"], r["r2"]] for r in sweep],
        )

        x_train = build_design_matrix(train_t, cfg.engineering, cfg.groups)
        model = gbm.train(x_train, cfg.params)
        hsweep = forecast.horizon_sweep(model, val_t, cfg.engineering, cfg.intervals_seconds)
        out.write_csv(
            "horizon_sweep.csv",
            ["width_or_interval", "mse", "mae", "mape", "r2"],
            [[r["interval_seconds"], r["mse"], r["mae"], r["mape"], r["r2"]] for r in hsweep],
        )
    out.finish()


def _spectrum_rows(spec: pffra.Spectrum) -> list:
    rows = [(repr(0.0), repr(float(spec.dc)))]
    rows.extend(
        (repr(float(f)), repr(float(m)))
        for f, m in zip(spec.frequencies, spec.magnitudes)
    )
    return rows


def _select_case_pair(run, thr_acc: float, thr_dev: float):
    """First (accurate, deviated) scored indices sharing a true RT value."""
    err = np.abs(run.y_pred - run.y_true)
    accurate = np.flatnonzero(err < thr_acc)
    deviated = np.flatnonzero(err > thr_dev)
    for a in accurate:
        for d in deviated:
            if run.y_true[a] == run.y_true[d]:
                return int(a), int(d)
    raise DataError(
        f"no accurate/deviated pair shares a true RT value "
        f"(thresholds {thr_acc}/{thr_dev}; {len(accurate)} accurate, "
        f"{len(deviated)} deviated candidates)"
    )


def _attribution_doc(att: explain.Attribution) -> dict:
    doc = {
        "base_value": att.base_value,
        "contributions": att.contributions,
        "prediction": att.prediction,
    }
    if att.local_r2 is not None:
        doc["local_r2"] = att.local_r2
    if att.labels is not None:
        doc["labels"] = att.labels
    return doc


def _force_rows(att: explain.Attribution, values: dict) -> list:
    rows = [("__base__", "", repr(float(att.base_value)), repr(float(att.base_value)))]
    running = att.base_value
    ordered = sorted(
        att.contributions.items(), key=lambda kv: (-abs(kv[1]), kv[0])
    )
    for name, contrib in ordered:
        running += contrib
        rows.append(
            (name, repr(float(values[name])), repr(float(contrib)), repr(float(running)))
        )
    return rows


def cmd_explain(cfg: PipelineConfig, args) -> None:
    model = _require_model(args.model)
    table = _load_table(cfg)
    train_t, val_t, test_t = _split_table(cfg, table)
    groups = forecast.groups_for_model(model)
    x_train = build_design_matrix(train_t, cfg.engineering, groups)
    means = {n: float(x_train.column(n).mean()) for n in x_train.feature_names}

    out = ArtifactWriter(cfg.out_dir, f"explain_{args.method}", cfg)
    method = args.method

    if method == "importance":
        out.write_json("importance.json", {
            "gain": gbm.feature_importance_gain(model),
            "permutation_mean_substitute": explain.permutation_importance(
                model, x_train, x_train.target, metric="mae",
                strategy="mean_substitute", means=means,
            ),
        })

    elif method == "pdp":
        feats = [args.feature] if args.feature else list(model.feature_names)
        for name in feats:
            curve = explain.pdp(model, x_train, name)
            out.write_csv(
                f"pdp_{name}.csv",
                ["value", "mean_response"],
                [(repr(float(g)), repr(float(r)))
                 for g, r in zip(curve.grid, curve.mean_response)],
            )

    elif method == "surrogate":
        ridge = explain.fit_surrogate_ridge(model, x_train, cfg.explain_lambda)
        out.write_json("surrogate_ridge.json", {
            "intercept": ridge.intercept,
            "coefficients": ridge.coefficients,
            "std_coefficients": ridge.std_coefficients,
            "standardization": {k: list(v) for k, v in ridge.standardization.items()},
            "lambda": ridge.lambda_,
            "fidelity_r2": ridge.fidelity_r2,
        })
        tree, fidelity = explain.fit_surrogate_tree(model, x_train, cfg.explain_tree_depth)
        out.write_json("surrogate_tree.json", {
            "tree": gbm._node_to_dict(tree),
            "fidelity_r2": fidelity,
            "importance": explain.surrogate_tree_importance(tree, x_train.feature_names),
            "max_depth": cfg.explain_tree_depth,
        })

    elif method in ("lime", "shap"):
        if args.select:
            run = forecast.rolling_forecast(
                model, test_t, cfg.engineering,
                access_interval_seconds=cfg.access_seconds,
                horizon_seconds=cfg.horizon_seconds,
            )
            a, d = _select_case_pair(run, args.threshold_acc, args.threshold_dev)
            cases = {"accurate": run.feature_rows[a], "deviated": run.feature_rows[d]}
            case_meta = {
                "accurate": {"timestamp": timebase.format_instant(run.timestamps[a]),
                             "y_true": float(run.y_true[a]), "y_pred": float(run.y_pred[a])},
                "deviated": {"timestamp": timebase.format_instant(run.timestamps[d]),
                             "y_true": float(run.y_true[d]), "y_pred": float(run.y_pred[d])},
            }
        else:
            x_test = build_design_matrix(test_t, cfg.engineering, groups)
            idx = args.instance
            if not 0 <= idx < len(x_test):
                raise ConfigError(f"--instance {idx} out of range 0..{len(x_test) - 1}")
            cases = {f"instance{idx}": x_test.rows[idx]}
            case_meta = {f"instance{idx}": {"y_true": float(x_test.target[idx])}}

        bg = np.array([means[n] for n in model.feature_names])
        for label, row in cases.items():
            if method == "shap":
                att = explain.shap_exact(model, row, bg, model.feature_names)
            else:
                att = explain.lime_explain(
                    model, row, x_train,
                    n_samples=cfg.lime_samples, seed=cfg.seed,
                )
            doc = _attribution_doc(att)
            doc["case"] = case_meta[label]
            out.write_json(f"{method}_{label}.json", doc)
            if method == "shap":
                values = dict(zip(model.feature_names, (float(v) for v in row)))
                out.write_csv(
                    f"shap_{label}_force.csv",
                    ["feature", "value", "push", "cumulative"],
                    _force_rows(att, values),
                )

    elif method == "pffra":
        if not args.feature:
            raise ConfigError("pffra needs --feature NAME")
        part = {"train": train_t, "val": val_t, "test": test_t}[args.split]
        if args.protocol == "static":
            x_part = build_design_matrix(part, cfg.engineering, groups)
            report = pffra.pffra(
                model, x_part, x_part.target, args.feature, means=means
            )
        else:
            others = [n for n in model.feature_names if n != args.feature]
            base = forecast.rolling_forecast(
                model, part, cfg.engineering,
                access_interval_seconds=cfg.access_seconds,
                horizon_seconds=cfg.horizon_seconds,
            )
            permuted = forecast.rolling_forecast(
                model, part, cfg.engineering,
                access_interval_seconds=cfg.access_seconds,
                horizon_seconds=cfg.horizon_seconds,
                input_overrides={args.feature: means[args.feature]},
            )
            only = forecast.rolling_forecast(
                model, part, cfg.engineering,
                access_interval_seconds=cfg.access_seconds,
                horizon_seconds=cfg.horizon_seconds,
                input_overrides={n: means[n] for n in others},
            )
            step = part.interval_seconds
            report = pffra.PffraReport(
                feature=args.feature,
                spectrum_feature_only=pffra.dft(only.y_pred, step),
                spectrum_feature_permuted=pffra.dft(permuted.y_pred, step),
                spectrum_original=pffra.dft(base.y_pred, step),
                spectrum_truth=pffra.dft(base.y_true, step),
                band_energies={},
            )
            energies = {}
            for band_name, interval in pffra.DEFAULT_BANDS.items():
                energies[band_name] = {
                    variant: pffra.band_energy(spec, {band_name: interval})[band_name]
                    for variant, spec in {
                        "feature_only": report.spectrum_feature_only,
                        "feature_permuted": report.spectrum_feature_permuted,
                        "original": report.spectrum_original,
                        "truth": report.spectrum_truth,
                    }.items()
                }
            report = replace(report, band_energies=energies)

        tag = f"{args.feature}_{args.split}"
        out.write_json(f"pffra_{tag}.json", {
            "feature": report.feature,
            "protocol": args.protocol,
            "split": args.split,
            "dc": {
                "feature_only": report.spectrum_feature_only.dc,
                "feature_permuted": report.spectrum_feature_permuted.dc,
                "original": report.spectrum_original.dc,
                "truth": report.spectrum_truth.dc,
            },
            "band_energies": report.band_energies,
        })
        for variant, spec in (
            ("feature_only", report.spectrum_feature_only),
            ("feature_permuted", report.spectrum_feature_permuted),
            ("original", report.spectrum_original),
            ("truth", report.spectrum_truth),
        ):
            out.write_csv(
                f"spectrum_{variant}_{tag}.csv",
                ["frequency", "magnitude"],
                _spectrum_rows(spec),
            )
    else:
        raise ConfigError(
            f"unknown explain method {method!r}; "
            "choose importance, pdp, surrogate, lime, shap, or pffra"
        )
    out.finish(extra={"method": method})


def cmd_diagnose(cfg: PipelineConfig, args) -> None:
    table = _load_table(cfg)
    parts = dict(zip(("train", "val", "test"), _split_table(cfg, table)))
    series = parts[args.split].target
    out = ArtifactWriter(cfg.out_dir, f"diagnose_{args.which}", cfg)

    if args.which == "acf":
        vals = stats.acf(series, cfg.max_lag)
        out.write_csv("acf.csv", ["lag", "value"],
                      [(k, repr(float(v))) for k, v in enumerate(vals)])
    elif args.which == "pacf":
        vals = stats.pacf(series, cfg.max_lag)
        out.write_csv("pacf.csv", ["lag", "value"],
                      [(k, repr(float(v))) for k, v in enumerate(vals)])
    elif args.which == "adf":
        out.write_json("adf_rt.json", _adf_doc(stats.adf_test(series)))
        out.write_json("adf_diff.json", _adf_doc(stats.adf_test(np.diff(series))))
    elif args.which == "hist":
        for name, part in parts.items():
            out.write_csv(
                f"hist_{name}.csv",
                ["bin", "count"],
                stats.histogram(part.target, cfg.bin_width),
            )
    else:
        raise ConfigError(
            f"unknown diagnostic {args.which!r}; choose acf, pacf, adf, or hist"
        )
    out.finish(extra={"which": args.which, "split": args.split})


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtcast",
        description="Room-temperature forecasting and model-explanation pipeline",
    )
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="global seed (default 42)")
    parser.add_argument("--out", default="runs", help="output directory")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--days", type=int, default=None)

    p = sub.add_parser("ingest", help="validate and normalize a CSV dataset")
    p.add_argument("--csv", default=None)
    p.add_argument("--schema", default=None, help="column role map (name=role lines)")

    sub.add_parser("split", help="write train/validation/test tables")

    p = sub.add_parser("train", help="fit the boosted-tree model")
    p.add_argument("--groups", default=None, help='feature groups, e.g. "IOTS-MVA+MVART+Holiday"')

    p = sub.add_parser("evaluate", help="rolling-forecast metrics and residual diagnostics")
    p.add_argument("--model", default=None)

    p = sub.add_parser("ablate", help="feature-combination table and sweep experiments")
    p.add_argument("--skip-sweeps", action="store_true")

    p = sub.add_parser("explain", help="global and local model explanations")
    p.add_argument("method", choices=["importance", "pdp", "surrogate", "lime", "shap", "pffra"])
    p.add_argument("--model", default=None)
    p.add_argument("--feature", default=None)
    p.add_argument("--instance", type=int, default=0)
    p.add_argument("--select", default=None, help='case-study selection, e.g. "accurate,deviated"')
    p.add_argument("--threshold-acc", type=float, default=0.01)
    p.add_argument("--threshold-dev", type=float, default=2.0)
    p.add_argument("--split", choices=["train", "val", "test"], default="val")
    p.add_argument("--protocol", choices=["static", "rolling"], default="static")

    p = sub.add_parser("diagnose", help="ACF/PACF, unit-root tests, histograms")
    p.add_argument("which", choices=["acf", "pacf", "adf", "hist"])
    p.add_argument("--split", choices=["train", "val", "test"], default="train")
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "explain": cmd_explain,
    "diagnose": cmd_diagnose,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _build_config(args)
        if getattr(args, "model", None) is None and hasattr(args, "model"):
            args.model = os.path.join(cfg.out_dir, "model.json")
        if getattr(args, "select", None):
            wanted = {part.strip() for part in args.select.split(",")}
            if wanted != {"accurate", "deviated"}:
                raise ConfigError('--select currently supports exactly "accurate,deviated"')
        _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
