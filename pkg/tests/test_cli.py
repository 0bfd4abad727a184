import json

import numpy as np
import pytest

from latscale.cli import main

TINY_SCENARIO = {
    "seed": 5,
    "duration_steps": 150,
    "noise_sigma": 0.05,
    "services": {
        "front-end": {"base_service_ms": 5.0, "per_pod_rate": 30.0, "pods": 6},
        "shipping": {"base_service_ms": 7.0, "per_pod_rate": 20.0, "pods": 2},
        "cart": {"base_service_ms": 10.0, "per_pod_rate": 18.0, "pods": 3,
                 "pods_walk": {"period": 10, "low": 0.7, "high": 1.5}},
        "cart-db": {"base_service_ms": 8.0, "per_pod_rate": 25.0, "pods": 3},
        "catalogue": {"base_service_ms": 8.0, "per_pod_rate": 25.0, "pods": 3},
        "catalogue-db": {"base_service_ms": 6.0, "per_pod_rate": 25.0, "pods": 3},
        "user": {"base_service_ms": 6.0, "per_pod_rate": 20.0, "pods": 3},
        "user-db": {"base_service_ms": 5.0, "per_pod_rate": 25.0, "pods": 3},
        "payment": {"base_service_ms": 8.0, "per_pod_rate": 15.0, "pods": 2}
    },
    "workloads": {
        "green": {"base": 22.0, "amplitude": 6.0, "period": 40.0, "noise_sigma": 0.3},
        "purple": {"base": 10.0, "amplitude": 2.0, "period": 50.0, "noise_sigma": 0.2},
        "blue": {"base": 12.0, "amplitude": 3.0, "period": 45.0, "noise_sigma": 0.2},
        "red": {"base": 8.0, "amplitude": 2.0, "period": 55.0, "noise_sigma": 0.2},
        "black": {"base": 6.0, "amplitude": 1.0, "period": 60.0, "noise_sigma": 0.2}
    },
}

TINY_INI = """
[run]
trace = green
resources = horizontal
features = cps.green, pods.cart

[tft]
encoder_length = 16
decoder_length = 4
max_epochs = 2
early_stopping_patience = 1
seed = 9

[boxes]
pods = 2.0, 4.0
cps = 0.25, 1.0
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    scenario = root / "scenario.json"
    scenario.write_text(json.dumps(TINY_SCENARIO))
    ini = root / "config.ini"
    ini.write_text(TINY_INI)
    out = root / "run"
    assert main(["simulate", "--scenario", str(scenario), "--out", str(out), "--quiet"]) == 0
    assert main([
        "train", "--config", str(ini), "--dataset", str(out / "dataset.csv"),
        "--out", str(out), "--quiet",
    ]) == 0
    return {"root": root, "scenario": scenario, "ini": ini, "out": out}


class TestSimulate:
    def test_deterministic_bytes(self, workspace, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["simulate", "--scenario", str(workspace["scenario"]),
                         "--out", str(out), "--quiet"]) == 0
        assert (a / "dataset.csv").read_bytes() == (b / "dataset.csv").read_bytes()

    def test_zero_duration_is_usage_error(self, workspace, tmp_path):
        rc = main(["simulate", "--scenario", str(workspace["scenario"]),
                   "--duration", "0", "--out", str(tmp_path), "--quiet"])
        assert rc == 2

    def test_bundled_scenario_has_all_five_traces(self, tmp_path):
        assert main(["simulate", "--scenario", "sla_demo", "--duration", "30",
                     "--out", str(tmp_path), "--quiet"]) == 0
        header = (tmp_path / "dataset.csv").read_text().splitlines()[0]
        for color in ("purple", "green", "blue", "red", "black"):
            assert f"cps.{color}" in header
            assert f"latency_p95.{color}" in header

    def test_unknown_scenario_name(self, tmp_path):
        rc = main(["simulate", "--scenario", "no-such-thing", "--out", str(tmp_path), "--quiet"])
        assert rc == 2


class TestTrain:
    def test_report_echoes_model_settings(self, workspace):
        report = json.loads((workspace["out"] / "training_report.json").read_text())
        assert report["config"]["hidden_size"] == 8
        assert report["config"]["attention_heads"] == 1
        assert report["config"]["dropout"] == 0.1

    def test_missing_dataset_is_usage_error(self, workspace, tmp_path):
        rc = main(["train", "--config", str(workspace["ini"]),
                   "--dataset", str(tmp_path / "nope.csv"), "--out", str(tmp_path), "--quiet"])
        assert rc == 2

    def test_epochs_flag_overrides(self, workspace, tmp_path):
        rc = main(["train", "--config", str(workspace["ini"]),
                   "--dataset", str(workspace["out"] / "dataset.csv"),
                   "--epochs", "1", "--out", str(tmp_path), "--quiet"])
        assert rc == 0
        report = json.loads((tmp_path / "training_report.json").read_text())
        assert len(report["train_loss"]) == 1

    def test_dataset_too_short_is_validation_error(self, workspace, tmp_path):
        assert main(["simulate", "--scenario", str(workspace["scenario"]),
                     "--duration", "10", "--out", str(tmp_path), "--quiet"]) == 0
        rc = main(["train", "--config", str(workspace["ini"]),
                   "--dataset", str(tmp_path / "dataset.csv"), "--out", str(tmp_path), "--quiet"])
        assert rc == 2


class TestPredictInterpret:
    def test_forecast_shape_and_determinism(self, workspace, tmp_path):
        args = ["predict", "--config", str(workspace["ini"]),
                "--dataset", str(workspace["out"] / "dataset.csv"),
                "--checkpoint", str(workspace["out"] / "checkpoint.json"), "--quiet"]
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(args + ["--out", str(out)]) == 0
        lines = (a / "forecast.csv").read_text().splitlines()
        assert len(lines) == 1 + 4 * 3  # header + decoder steps x quantiles
        assert lines[0] == "step,quantile,value_ms"
        assert (a / "forecast.csv").read_bytes() == (b / "forecast.csv").read_bytes()

    def test_importance_rows_sum_to_one(self, workspace, tmp_path):
        assert main(["interpret", "--config", str(workspace["ini"]),
                     "--dataset", str(workspace["out"] / "dataset.csv"),
                     "--checkpoint", str(workspace["out"] / "checkpoint.json"),
                     "--out", str(tmp_path), "--quiet"]) == 0
        from latscale.cli import read_importance_csv

        for name in ("importance.csv", "importance_encoder.csv"):
            _, matrix = read_importance_csv(tmp_path / name)
            np.testing.assert_allclose(matrix.sum(axis=1), 1.0, atol=1e-6)

    def test_checkpoint_feature_mismatch(self, workspace, tmp_path):
        assert main(["simulate", "--scenario", "sla_demo", "--duration", "40",
                     "--out", str(tmp_path), "--quiet"]) == 0
        import csv as csv_mod

        with open(tmp_path / "dataset.csv") as fh:
            rows = list(csv_mod.reader(fh))
        keep = [i for i, name in enumerate(rows[0]) if name != "pods.cart"]
        with open(tmp_path / "trimmed.csv", "w", newline="") as fh:
            writer = csv_mod.writer(fh)
            for row in rows:
                writer.writerow([row[i] for i in keep])
        rc = main(["predict", "--dataset", str(tmp_path / "trimmed.csv"),
                   "--checkpoint", str(workspace["out"] / "checkpoint.json"),
                   "--out", str(tmp_path), "--quiet"])
        assert rc == 2

    def test_missing_checkpoint(self, workspace, tmp_path):
        rc = main(["predict", "--dataset", str(workspace["out"] / "dataset.csv"),
                   "--checkpoint", str(tmp_path / "none.json"), "--out", str(tmp_path), "--quiet"])
        assert rc == 2


class TestEvaluate:
    def test_metrics_include_baseline(self, workspace, tmp_path):
        assert main(["evaluate", "--config", str(workspace["ini"]),
                     "--dataset", str(workspace["out"] / "dataset.csv"),
                     "--checkpoint", str(workspace["out"] / "checkpoint.json"),
                     "--out", str(tmp_path), "--quiet"]) == 0
        metrics = json.loads((tmp_path / "metrics.json").read_text())
        assert {"model", "persistence", "band_coverage", "n_windows"} <= set(metrics)
        assert "rmse" in metrics["model"] and "r2" in metrics["model"]


class TestPlan:
    def prime(self, workspace, out):
        for cmd in ("predict", "interpret"):
            assert main([cmd, "--config", str(workspace["ini"]),
                         "--dataset", str(workspace["out"] / "dataset.csv"),
                         "--checkpoint", str(workspace["out"] / "checkpoint.json"),
                         "--out", str(out), "--quiet"]) == 0

    def test_noop_when_sla_generous(self, workspace, tmp_path):
        self.prime(workspace, tmp_path)
        assert main(["plan", "--config", str(workspace["ini"]),
                     "--dataset", str(workspace["out"] / "dataset.csv"),
                     "--sla-ms", "1000000", "--out", str(tmp_path), "--quiet"]) == 0
        plan = json.loads((tmp_path / "plan.json").read_text())
        assert plan["violation_fraction"] == 0.0
        assert plan["actions"] == []

    def test_violation_produces_pod_action(self, workspace, tmp_path):
        self.prime(workspace, tmp_path)
        assert main(["plan", "--config", str(workspace["ini"]),
                     "--dataset", str(workspace["out"] / "dataset.csv"),
                     "--sla-ms", "10", "--out", str(tmp_path), "--quiet"]) == 0
        plan = json.loads((tmp_path / "plan.json").read_text())
        assert plan["violation_fraction"] > 0
        assert any(a["resource"] == "pods" for a in plan["actions"])
        assert set(plan) == {"trace", "sla_ms", "violation_fraction", "theta",
                             "converged", "objective_value", "actions", "advisories"}

    def test_plan_requires_forecast_inputs(self, workspace, tmp_path):
        rc = main(["plan", "--dataset", str(workspace["out"] / "dataset.csv"),
                   "--sla-ms", "10", "--out", str(tmp_path), "--quiet"])
        assert rc == 2


class TestE2e:
    def test_no_violation_leaves_everything_unchanged(self, workspace, tmp_path):
        rc = main(["e2e", "--config", str(workspace["ini"]),
                   "--scenario", str(workspace["scenario"]),
                   "--sla-ms", "1000000", "--out", str(tmp_path), "--quiet"])
        assert rc == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert not summary["violated"]
        assert summary["after_p95_ms"] == summary["before_p95_ms"]
        assert (tmp_path / "dataset.csv").read_bytes() == (tmp_path / "dataset_after.csv").read_bytes()

    def test_violation_loop_scales_up(self, workspace, tmp_path):
        rc = main(["e2e", "--config", str(workspace["ini"]),
                   "--scenario", str(workspace["scenario"]),
                   "--sla-ms", "30", "--out", str(tmp_path), "--quiet"])
        assert rc == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["violated"]
        assert summary["after_p95_ms"] < summary["before_p95_ms"]
        assert (tmp_path / "plan.json").exists()
        assert (tmp_path / "krr_models.json").exists()


class TestArgparse:
    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--bogus"])
        assert exc.value.code == 2

    def test_missing_command_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2
