"""Rolling re-anchored forecasting and the window/horizon sweeps."""
import numpy as np
import pytest

from rtcast import features, forecast, gbm, stats, timebase
from rtcast.errors import ConfigError
from rtcast.features import EngineeringConfig

from conftest import FULL_GROUPS, make_matrix


@pytest.fixture(scope="module")
def val_run(small_model, synth_splits, engineering):
    return forecast.rolling_forecast(small_model, synth_splits[1], engineering)


class TestRollingForecast:
    def test_anchors_sit_at_local_midnight(self, val_run, engineering):
        local = val_run.anchors + timebase.offset_seconds(engineering.utc_offset_hours)
        assert (local % 86400 == 0).all()

    def test_scored_steps_stay_within_horizon(self, val_run):
        for i in range(len(val_run)):
            anchor_ts = val_run.anchors[val_run.anchor_ids[i]]
            lead = val_run.timestamps[i] - anchor_ts
            assert 0 < lead <= val_run.horizon_seconds

    def test_exogenous_inputs_come_from_the_table(self, val_run, synth_splits,
                                                  engineering):
        X = features.build_design_matrix(synth_splits[1], engineering, FULL_GROUPS)
        pos = {ts: i for i, ts in enumerate(X.row_timestamps)}
        mvart = X.index("MVART")
        for i in range(len(val_run)):
            j = pos[val_run.timestamps[i]]
            for c in range(len(val_run.feature_names)):
                if c != mvart:
                    assert val_run.feature_rows[i, c] == X.rows[j, c]

    def test_feedback_buffer_recurrence(self, val_run, synth_splits, engineering):
        """Replay the documented recurrence: the moving-average input starts
        from true history at the anchor and then absorbs each prediction."""
        table = synth_splits[1]
        w = engineering.mva_window
        mvart = list(val_run.feature_names).index("MVART")
        anchor_rows = np.searchsorted(table.timestamps, val_run.anchors)
        for a_num, a in enumerate(anchor_rows):
            mine = np.flatnonzero(val_run.anchor_ids == a_num)
            buffer = list(table.target[a - w + 1: a + 1])
            for i in mine:
                assert val_run.feature_rows[i, mvart] == pytest.approx(
                    np.mean(buffer[-w:]), abs=1e-12
                )
                buffer.append(val_run.y_pred[i])

    def test_predictions_match_recorded_rows(self, val_run, small_model):
        for i in range(0, len(val_run), 7):
            assert val_run.y_pred[i] == pytest.approx(
                small_model.predict_row(val_run.feature_rows[i]), abs=1e-12
            )

    def test_report_reduces_arrays(self, val_run):
        rep = val_run.report()
        want = stats.metrics(val_run.y_true, val_run.y_pred)
        assert rep.mae == want.mae and rep.mse == want.mse

    def test_horizon_must_fit_access_interval(self, small_model, synth_splits,
                                              engineering):
        with pytest.raises(ConfigError):
            forecast.rolling_forecast(
                small_model, synth_splits[1], engineering,
                access_interval_seconds=3600, horizon_seconds=7200,
            )

    def test_intervals_must_align_to_sampling(self, small_model, synth_splits,
                                              engineering):
        with pytest.raises(ConfigError):
            forecast.rolling_forecast(
                small_model, synth_splits[1], engineering,
                access_interval_seconds=86400, horizon_seconds=900,
            )

    def test_table_must_span_one_interval(self, small_model, synth_splits,
                                          engineering):
        tiny = synth_splits[1].row_slice(0, 30)
        with pytest.raises(ConfigError):
            forecast.rolling_forecast(small_model, tiny, engineering)

    def test_unrecognized_model_features(self, synth_splits, engineering):
        X = make_matrix(np.random.default_rng(0).normal(size=(30, 2)),
                        ["a", "b"], target=np.arange(30.0))
        stray = gbm.train(X, gbm.Hyperparams(max_depth=1, n_trees=1))
        with pytest.raises(ConfigError):
            forecast.rolling_forecast(stray, synth_splits[1], engineering)

    def test_input_overrides_change_the_model_view(self, small_model,
                                                   synth_splits, engineering,
                                                   val_run):
        hour = list(small_model.feature_names).index("Hour")
        run = forecast.rolling_forecast(
            small_model, synth_splits[1], engineering,
            input_overrides={"Hour": 11.0},
        )
        assert (run.feature_rows[:, hour] == 11.0).all()
        assert not np.array_equal(run.y_pred, val_run.y_pred)
        # scenario columns other than the overridden one are untouched
        onoff = list(small_model.feature_names).index("OnOffState")
        assert np.array_equal(run.feature_rows[:, onoff],
                              val_run.feature_rows[:, onoff])

    def test_override_must_name_a_feature(self, small_model, synth_splits,
                                          engineering):
        with pytest.raises(ConfigError):
            forecast.rolling_forecast(
                small_model, synth_splits[1], engineering,
                input_overrides={"Bogus": 0.0},
            )


class TestSweeps:
    def test_horizon_sweep_equals_manual_runs(self, small_model, synth_splits,
                                              engineering):
        rows = forecast.horizon_sweep(small_model, synth_splits[1], engineering,
                                      [3600, 14400])
        assert [r["interval_seconds"] for r in rows] == [3600, 14400]
        manual = forecast.rolling_forecast(
            small_model, synth_splits[1], engineering,
            access_interval_seconds=3600, horizon_seconds=3600,
        ).report()
        assert rows[0]["mae"] == pytest.approx(manual.mae)

    def test_horizon_sweep_needs_intervals(self, small_model, synth_splits,
                                           engineering):
        with pytest.raises(ConfigError):
            forecast.horizon_sweep(small_model, synth_splits[1], engineering, [])

    def test_window_sweep_rows(self, synth_splits, engineering):
        params = gbm.Hyperparams(max_depth=3, n_trees=8)
        rows = forecast.window_sweep(
            synth_splits[0], synth_splits[1], [0, 3600], engineering, params,
        )
        assert [r["width_seconds"] for r in rows] == [0, 3600]
        for r in rows:
            assert {"width_seconds", "mse", "mae", "mape", "r2"} <= set(r)
        assert rows[0]["mae"] != rows[1]["mae"]

    def test_window_sweep_rejects_misaligned_width(self, synth_splits, engineering):
        params = gbm.Hyperparams(max_depth=3, n_trees=5)
        with pytest.raises(ConfigError):
            forecast.window_sweep(
                synth_splits[0], synth_splits[1], [700], engineering, params,
            )


class TestGroupsForModel:
    @pytest.mark.parametrize("groups", [
        frozenset({"IOTS"}),
        frozenset({"IOTS", "Holiday"}),
        frozenset({"IOTS-MVA", "MVART", "Holiday"}),
        frozenset({"IOTS-MVA", "MVART"}),
    ])
    def test_round_trip(self, groups, synth_splits, engineering):
        X = features.build_design_matrix(synth_splits[0], engineering, groups)
        model = gbm.train(X, gbm.Hyperparams(max_depth=2, n_trees=2))
        assert forecast.groups_for_model(model) == groups
