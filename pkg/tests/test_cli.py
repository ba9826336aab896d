"""End-to-end command-line runs in a subprocess: artifacts, manifests,
determinism, and exit codes."""
import csv
import hashlib
import json
import subprocess
import sys

import pytest

CONFIG = """\
data.source = synth
synth.days = 20
model.max_depth = 3
model.n_trees = 8
"""


def run_cli(*args, check=True):
    proc = subprocess.run(
        [sys.executable, "-m", "rtcast.cli", *args],
        capture_output=True, text=True,
    )
    if check and proc.returncode != 0:
        raise AssertionError(f"cli failed ({proc.returncode}): {proc.stderr}")
    return proc


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One finished synth/train/evaluate run shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.ini"
    cfg.write_text(CONFIG)
    out = root / "out"
    for cmd in ("synth", "train", "evaluate"):
        run_cli("--config", str(cfg), "--out", str(out), "--quiet", cmd)
    return cfg, out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestPipelineArtifacts:
    def test_manifest_hashes_match_files(self, pipeline):
        _, out = pipeline
        for manifest in out.glob("manifest_*.json"):
            doc = json.loads(manifest.read_text())
            assert doc["schema_version"] == 1
            assert doc["artifacts"], manifest.name
            for art in doc["artifacts"]:
                data = (out / art["path"]).read_bytes()
                assert hashlib.sha256(data).hexdigest() == art["sha256"], art["path"]

    def test_forecast_csv_layout(self, pipeline):
        _, out = pipeline
        rows = read_csv(out / "forecast_test.csv")
        assert rows[0] == ["timestamp", "y_true", "y_pred", "anchor_id"]
        assert len(rows) > 1
        float(rows[1][1]), float(rows[1][2])  # numeric cells
        assert rows[1][0].endswith("Z")

    def test_metrics_reports_have_schema(self, pipeline):
        _, out = pipeline
        for name in ("metrics_train.json", "metrics_val.json", "metrics_test.json",
                     "metrics_fit_train.json"):
            doc = json.loads((out / name).read_text())
            assert {"schema_version", "mae", "mse"} <= set(doc)

    def test_residual_rows_cover_scored_predictions(self, pipeline):
        _, out = pipeline
        scored = len(read_csv(out / "forecast_test.csv")) - 1
        assert len(read_csv(out / "residuals_test.csv")) - 1 == scored
        qq = read_csv(out / "qq_test.csv")
        assert len(qq) - 1 == scored

    def test_model_file_is_sorted_json(self, pipeline):
        _, out = pipeline
        text = (out / "model.json").read_text()
        doc = json.loads(text)
        assert json.dumps(doc, sort_keys=True, indent=1) + "\n" == text

    def test_write_once(self, pipeline):
        cfg, out = pipeline
        proc = run_cli("--config", str(cfg), "--out", str(out), "--quiet",
                       "synth", check=False)
        assert proc.returncode == 2
        assert "refusing to overwrite" in proc.stderr


class TestDeterminism:
    def test_two_runs_are_byte_identical(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text(CONFIG)
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            for cmd in ("synth", "train", "evaluate"):
                run_cli("--config", str(cfg), "--out", str(out), "--quiet", cmd)
            outs.append(out)
        a, b = outs
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


class TestExplainCommands:
    def test_shap_force_csv_walks_to_the_prediction(self, pipeline, tmp_path):
        cfg, out = pipeline
        dest = tmp_path / "exp"
        run_cli("--config", str(cfg), "--out", str(dest), "--quiet",
                "explain", "shap", "--model", str(out / "model.json"),
                "--instance", "4")
        doc = json.loads((dest / "shap_instance4.json").read_text())
        rows = read_csv(dest / "shap_instance4_force.csv")
        assert rows[0] == ["feature", "value", "push", "cumulative"]
        assert rows[1][0] == "__base__"
        assert float(rows[-1][3]) == pytest.approx(doc["prediction"], abs=1e-9)

    def test_pffra_artifacts(self, pipeline, tmp_path):
        cfg, out = pipeline
        dest = tmp_path / "pf"
        run_cli("--config", str(cfg), "--out", str(dest), "--quiet",
                "explain", "pffra", "--model", str(out / "model.json"),
                "--feature", "MVART")
        doc = json.loads((dest / "pffra_MVART_val.json").read_text())
        assert set(doc["band_energies"]) == {"dc", "low", "mid", "high"}
        spec = read_csv(dest / "spectrum_feature_only_MVART_val.csv")
        assert spec[0] == ["frequency", "magnitude"]
        assert float(spec[1][0]) == 0.0  # DC row leads
        assert doc["dc"]["feature_only"] == pytest.approx(float(spec[1][1]))

    def test_pdp_importance_surrogate(self, pipeline, tmp_path):
        cfg, out = pipeline
        dest = tmp_path / "glb"
        model = str(out / "model.json")
        run_cli("--config", str(cfg), "--out", str(dest), "--quiet",
                "explain", "importance", "--model", model)
        run_cli("--config", str(cfg), "--out", str(dest), "--quiet",
                "explain", "pdp", "--feature", "Hour", "--model", model)
        run_cli("--config", str(cfg), "--out", str(dest), "--quiet",
                "explain", "surrogate", "--model", model)
        imp = json.loads((dest / "importance.json").read_text())
        assert set(imp["gain"]) == set(imp["permutation_mean_substitute"])
        pdp_rows = read_csv(dest / "pdp_Hour.csv")
        assert pdp_rows[0] == ["value", "mean_response"]
        assert len(pdp_rows) == 25  # 24 hourly levels + header
        ridge = json.loads((dest / "surrogate_ridge.json").read_text())
        assert "MVART" in ridge["coefficients"]


class TestDiagnoseCommands:
    def test_acf_row_count(self, pipeline, tmp_path):
        cfg, _ = pipeline
        dest = tmp_path / "diag"
        run_cli("--config", str(cfg), "--out", str(dest), "--quiet",
                "diagnose", "acf")
        rows = read_csv(dest / "acf.csv")
        assert len(rows) == 32  # header + lags 0..30
        assert rows[1] == ["0", "1.0"]

    def test_adf_reports(self, pipeline, tmp_path):
        cfg, _ = pipeline
        dest = tmp_path / "adf"
        run_cli("--config", str(cfg), "--out", str(dest), "--quiet",
                "diagnose", "adf")
        rt = json.loads((dest / "adf_rt.json").read_text())
        diff = json.loads((dest / "adf_diff.json").read_text())
        assert {"statistic", "used_lags", "reject_at", "p_bracket"} <= set(rt)
        assert diff["reject_at"]["1%"] is True

    def test_hist_per_split(self, pipeline, tmp_path):
        cfg, _ = pipeline
        dest = tmp_path / "hist"
        run_cli("--config", str(cfg), "--out", str(dest), "--quiet",
                "diagnose", "hist")
        for name in ("hist_train.csv", "hist_val.csv", "hist_test.csv"):
            rows = read_csv(dest / name)
            assert rows[0] == ["bin", "count"]
            assert len(rows) > 1


class TestSplitAndIngest:
    def test_split_partitions(self, pipeline, tmp_path):
        cfg, _ = pipeline
        dest = tmp_path / "split"
        run_cli("--config", str(cfg), "--out", str(dest), "--quiet", "split")
        report = json.loads((dest / "split_report.json").read_text())
        n = sum(report["rows"].values())
        assert n == 20 * 144
        assert report["rows"]["train"] == int(n * 0.6)

    def test_ingest_round_trip(self, pipeline, tmp_path):
        _, out = pipeline
        dest = tmp_path / "ing"
        run_cli("--out", str(dest), "--quiet", "ingest",
                "--csv", str(out / "synthetic.csv"))
        assert (dest / "normalized.csv").read_bytes() == \
            (out / "synthetic.csv").read_bytes()
        rep = json.loads((dest / "ingest_report.json").read_text())
        assert rep["rows"] == 20 * 144
        assert rep["interval_seconds"] == 600


class TestExitCodes:
    def test_missing_model_is_a_usage_error(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text(CONFIG)
        proc = run_cli("--config", str(cfg), "--out", str(tmp_path / "x"),
                       "--quiet", "evaluate", check=False)
        assert proc.returncode == 2

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("no.such.key = 1\n")
        proc = run_cli("--config", str(cfg), "--out", str(tmp_path / "x"),
                       "--quiet", "synth", check=False)
        assert proc.returncode == 2
        assert "no.such.key" in proc.stderr

    def test_bad_data_is_exit_three(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text(
            "timestamp,RT\n"
            "2020-01-01T00:00:00Z,20.0\n"
            "2020-01-01T00:00:00Z,21.0\n"
        )
        proc = run_cli("--out", str(tmp_path / "x"), "--quiet",
                       "ingest", "--csv", str(bad), check=False)
        assert proc.returncode == 3

    def test_unknown_method_is_rejected_by_the_parser(self, tmp_path):
        proc = run_cli("--out", str(tmp_path / "x"), "--quiet",
                       "explain", "nonsense", check=False)
        assert proc.returncode == 2
