import json

import numpy as np
import pytest

from latscale.tft import (
    ImportanceSeries,
    QuantileForecast,
    TemporalFusionTransformer,
    TftConfig,
    build_model,
    evaluate,
    interpret,
    load_checkpoint,
    persistence_metrics,
    pooled_forecast_metrics,
    predict,
    predict_many,
    prepare_batch,
    save_checkpoint,
    train,
)
from latscale.trace_data import (
    MetricSeries,
    SeriesKind,
    TraceDataset,
    WindowSpec,
    make_windows,
)

SMALL = TftConfig(encoder_length=64, decoder_length=16, hidden_size=8,
                  attention_heads=1, max_epochs=15, seed=3)


def sine_dataset(n=600, seed=0, noise=0.0):
    """Latency follows two observable drivers, so future covariates are
    informative for the decoder."""
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    calls = 30 + 12 * np.sin(2 * np.pi * t / 96)
    pods = 2 + (t // 80) % 3
    latency = 40 + 2.2 * calls + 25 / pods
    if noise:
        latency = latency * rng.lognormal(0, noise, n)
    return TraceDataset(
        time_index=t,
        series=(
            MetricSeries("cps.green", SeriesKind.FRONT_END_CALLS, calls),
            MetricSeries("pods.cart", SeriesKind.HORIZONTAL_RESOURCE, pods.astype(float), "cart"),
            MetricSeries("latency_p95.green", SeriesKind.TARGET_LATENCY, latency),
        ),
    )


def sine_windows(n=600, **kwargs):
    ds = sine_dataset(n, **kwargs)
    return make_windows(ds, WindowSpec(SMALL.encoder_length, SMALL.decoder_length), "green")


def small_model(config=SMALL, n_features=2):
    names = ["cps.green", "pods.cart"][:n_features]
    return TemporalFusionTransformer(config, names + ["latency_p95.green"], names)


class TestConfig:
    def test_quantiles_must_increase(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            TftConfig(quantiles=(0.5, 0.5, 0.9))
        with pytest.raises(ValueError, match="strictly increasing"):
            TftConfig(quantiles=(0.1, 1.0))

    def test_counts_positive(self):
        with pytest.raises(ValueError):
            TftConfig(hidden_size=0)

    def test_defaults_follow_training_setup(self):
        cfg = TftConfig()
        assert (cfg.hidden_size, cfg.attention_heads, cfg.dropout) == (8, 1, 0.1)
        assert (cfg.learning_rate, cfg.batch_size, cfg.max_epochs) == (0.03, 32, 20)
        assert (cfg.encoder_length, cfg.decoder_length) == (400, 50)


def expected_parameter_count(cfg: TftConfig, n_enc: int, n_dec: int) -> int:
    """Independent layer-shape bookkeeping for the assembled model."""
    h = cfg.hidden_size
    d = h // cfg.attention_heads

    def grn(n_in, n_out, hidden):
        total = n_in * hidden + hidden          # dense in
        total += hidden * n_out + n_out         # dense out
        total += 2 * (n_out * n_out + n_out)    # glu
        if n_in != n_out:
            total += n_in * n_out + n_out       # skip projection
        return total + 2 * n_out                # layer norm affine

    def gate_add_norm(width):
        return 2 * (width * width + width) + 2 * width

    total = (n_enc + n_dec) * (h + h)                       # per-feature embeddings
    total += grn(n_enc * h, n_enc, h) + grn(n_dec * h, n_dec, h)  # selection networks
    total += (n_enc + n_dec) * grn(h, h, h)                 # per-feature GRNs
    total += 2 * (h * 4 * h + h * 4 * h + 4 * h)            # LSTM encoder + decoder
    total += gate_add_norm(h)                               # post-LSTM gate
    total += grn(h, h, h)                                   # enrichment
    total += cfg.attention_heads * (h * d + d)              # query projections
    total += cfg.attention_heads * (h * d)                  # key projections (no bias)
    total += h * d + d                                      # shared value projection
    total += d * h + h                                      # attention output
    total += gate_add_norm(h)                               # post-attention gate
    total += grn(h, h, h)                                   # final GRN
    total += len(cfg.quantiles) * (h + 1)                   # quantile heads
    return total


class TestBuildModel:
    def test_parameter_count_matches_bookkeeping(self):
        cfg = TftConfig(hidden_size=8, attention_heads=1)
        model = build_model(cfg, 7, 6)
        assert model.parameter_count() == expected_parameter_count(cfg, 7, 6)

    def test_parameter_count_two_heads(self):
        cfg = TftConfig(hidden_size=8, attention_heads=2)
        model = build_model(cfg, 4, 3)
        assert model.parameter_count() == expected_parameter_count(cfg, 4, 3)

    def test_selection_weights_shape(self):
        model = small_model()
        windows = sine_windows()[:3]
        batch = prepare_batch(windows, SMALL)
        out = model.forward(batch.enc, batch.dec)
        assert out["encoder_weights"].shape == (3, 64, 3)
        assert out["decoder_weights"].shape == (3, 16, 2)

    def test_attention_rows_sum_to_one(self):
        model = small_model()
        batch = prepare_batch(sine_windows()[:2], SMALL)
        out = model.forward(batch.enc, batch.dec)
        np.testing.assert_allclose(out["attention"].values.sum(axis=-1), 1.0, atol=1e-6)

    def test_invalid_feature_count(self):
        with pytest.raises(ValueError):
            build_model(TftConfig(), 0, 2)


@pytest.fixture(scope="module")
def trained_sine():
    windows = sine_windows()
    model = small_model()
    report = train(model, windows)
    return model, report, windows


class TestTrain:
    def test_loss_drops_order_of_magnitude(self, trained_sine):
        _, report, _ = trained_sine
        assert report.train_loss[-1] <= 0.10 * report.train_loss[0]

    def test_single_epoch_when_configured(self):
        cfg = TftConfig(encoder_length=64, decoder_length=16, max_epochs=1,
                        early_stopping_patience=0, seed=1)
        model = small_model(cfg)
        report = train(model, sine_windows())
        assert report.stopped_epoch == 1
        assert len(report.train_loss) == 1

    def test_deterministic_given_seed(self):
        windows = sine_windows(n=220)
        cfg = TftConfig(encoder_length=64, decoder_length=16, max_epochs=2, seed=7)
        first = train(small_model(cfg), windows)
        second = train(small_model(cfg), windows)
        assert first.train_loss == second.train_loss
        assert first.val_loss == second.val_loss

    def test_empty_window_set(self):
        with pytest.raises(ValueError, match="empty window set"):
            train(small_model(), [])

    def test_best_weights_restored(self, trained_sine):
        model, report, windows = trained_sine
        _, val = windows[: report.n_train_windows], windows[report.n_train_windows :]
        from latscale.tft import evaluate_loss

        current = evaluate_loss(model, prepare_batch(val, model.config))
        assert current == pytest.approx(min(report.val_loss), rel=1e-9)


class TestPredict:
    def test_constant_series_roundtrip(self):
        n = 200
        t = np.arange(n)
        ds = TraceDataset(
            time_index=t,
            series=(
                MetricSeries("cps.green", SeriesKind.FRONT_END_CALLS, 10 + np.sin(t / 9.0)),
                MetricSeries("latency_p95.green", SeriesKind.TARGET_LATENCY, np.full(n, 75.0)),
            ),
        )
        cfg = TftConfig(encoder_length=64, decoder_length=16, max_epochs=2, seed=2)
        model = TemporalFusionTransformer(cfg, ["cps.green", "latency_p95.green"], ["cps.green"])
        windows = make_windows(ds, WindowSpec(64, 16), "green")
        train(model, windows)
        forecast = predict(model, windows[-1])
        np.testing.assert_allclose(forecast.median, 75.0, rtol=0.05)

    def test_quantiles_sorted_per_step(self, trained_sine):
        model, _, windows = trained_sine
        for f in predict_many(model, windows[-20:]):
            assert np.all(np.diff(f.values, axis=1) >= 0)

    def test_window_length_mismatch(self, trained_sine):
        model, _, _ = trained_sine
        bad = make_windows(sine_dataset(300), WindowSpec(32, 8), "green")
        with pytest.raises(ValueError, match="do not match"):
            predict(model, bad[0])

    def test_forecast_type_validates(self):
        with pytest.raises(ValueError, match="non-decreasing"):
            QuantileForecast((0.1, 0.5, 0.9), np.array([[3.0, 2.0, 1.0]]))


class TestInterpret:
    def test_weights_are_distributions(self, trained_sine):
        model, _, windows = trained_sine
        imp = interpret(model, windows[-1])
        np.testing.assert_allclose(imp.encoder_variable_importance.sum(axis=1), 1.0, atol=1e-6)
        np.testing.assert_allclose(imp.decoder_variable_importance.sum(axis=1), 1.0, atol=1e-6)
        np.testing.assert_allclose(imp.attention_profile.sum(axis=1), 1.0, atol=1e-6)

    def test_single_feature_gets_all_weight(self):
        n = 160
        t = np.arange(n)
        ds = TraceDataset(
            time_index=t,
            series=(
                MetricSeries("cps.green", SeriesKind.FRONT_END_CALLS, 5 + np.cos(t / 7.0)),
                MetricSeries("latency_p95.green", SeriesKind.TARGET_LATENCY, 50 + 10 * np.sin(t / 11.0)),
            ),
        )
        cfg = TftConfig(encoder_length=64, decoder_length=16, max_epochs=1, seed=4)
        model = TemporalFusionTransformer(cfg, ["cps.green", "latency_p95.green"], ["cps.green"])
        windows = make_windows(ds, WindowSpec(64, 16), "green")
        train(model, windows)
        imp = interpret(model, windows[0])
        np.testing.assert_allclose(imp.decoder_variable_importance, 1.0, atol=1e-12)
        assert imp.mean_decoder_importance() == {"cps.green": 1.0}

    def test_importance_series_validates(self):
        with pytest.raises(ValueError, match="sum to one"):
            ImportanceSeries(
                ("a",), ("a",),
                encoder_variable_importance=np.array([[0.5]]),
                decoder_variable_importance=np.array([[1.0]]),
                attention_profile=np.array([[1.0]]),
            )


class TestEvaluate:
    def test_perfect_fit(self):
        out = evaluate([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert out == {"rmse": 0.0, "r2": 1.0}

    def test_mean_forecast_scores_zero(self):
        out = evaluate([1.0, 1.0], [0.0, 2.0])
        assert out["rmse"] == pytest.approx(1.0)
        assert out["r2"] == pytest.approx(0.0)

    def test_constant_forecast_off_mean(self):
        out = evaluate([2.0, 2.0], [0.0, 2.0])
        assert out["rmse"] == pytest.approx(np.sqrt(2.0))
        assert out["r2"] == pytest.approx(-1.0)

    def test_zero_variance_actuals(self):
        with pytest.raises(ValueError, match="zero variance"):
            evaluate([1.0, 2.0], [3.0, 3.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            evaluate([1.0], [1.0, 2.0])


class TestCheckpoint:
    def test_roundtrip_preserves_predictions(self, trained_sine, tmp_path):
        model, _, windows = trained_sine
        save_checkpoint(model, tmp_path / "model.json")
        restored = load_checkpoint(tmp_path / "model.json")
        a = predict(model, windows[-1])
        b = predict(restored, windows[-1])
        np.testing.assert_array_equal(a.values, b.values)
        assert restored.encoder_features == model.encoder_features

    def test_checkpoint_is_versioned(self, trained_sine, tmp_path):
        model, _, _ = trained_sine
        save_checkpoint(model, tmp_path / "model.json")
        doc = json.loads((tmp_path / "model.json").read_text())
        assert doc["format_version"] == 1


class TestDecoderUsage:
    def test_zeroing_decoder_inputs_changes_predictions(self, trained_sine):
        model, _, windows = trained_sine
        from latscale.tft import prepare_batch

        batch = prepare_batch(windows[-2:], model.config, model.feature_scaling)
        normal = model.forward(batch.enc, batch.dec)["quantiles"].values
        blanked = model.forward(batch.enc, np.zeros_like(batch.dec))["quantiles"].values
        assert np.max(np.abs(normal - blanked)) > 1e-6


class TestBaselines:
    def test_model_beats_persistence_on_covariate_driven_series(self, trained_sine):
        model, report, windows = trained_sine
        held_out = windows[report.n_train_windows :]
        model_r2 = pooled_forecast_metrics(model, held_out)["r2"]
        persistence_r2 = persistence_metrics(held_out)["r2"]
        assert model_r2 > persistence_r2
        assert model_r2 > 0.8
