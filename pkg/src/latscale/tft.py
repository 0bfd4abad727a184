"""Temporal fusion forecaster for per-trace p95 latency.

Pipeline: per-feature embeddings -> variable selection -> LSTM
encoder/decoder -> gated skip -> enrichment GRN -> interpretable
attention over all positions (causal) -> final GRN -> one linear head
per quantile.  Encoder sequences are min-max scaled per window and
predictions are mapped back to milliseconds with the recorded state.
The variable-selection softmax weights and the head-averaged attention
weights are exported as importance scores.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict, replace
from typing import Callable, Sequence

import numpy as np

from . import nn
from .nn import autodiff as ad
from .nn.autodiff import Tensor
from .trace_data import EPSILON, RANGE_FLOOR, Window


@dataclass(frozen=True)
class TftConfig:
    hidden_size: int = 8
    attention_heads: int = 1
    dropout: float = 0.1
    learning_rate: float = 0.03
    batch_size: int = 32
    max_epochs: int = 20
    encoder_length: int = 400
    decoder_length: int = 50
    quantiles: tuple[float, ...] = (0.1, 0.5, 0.9)
    early_stopping_patience: int = 5
    validation_fraction: float = 0.2
    seed: int = 0
    include_relative_time: bool = False

    def __post_init__(self):
        counts = (
            self.hidden_size,
            self.attention_heads,
            self.batch_size,
            self.max_epochs,
            self.encoder_length,
            self.decoder_length,
        )
        if any(c < 1 for c in counts):
            raise ValueError("all size and count settings must be positive")
        qs = tuple(self.quantiles)
        if not qs or any(not 0 < q < 1 for q in qs) or any(b <= a for a, b in zip(qs, qs[1:])):
            raise ValueError("quantiles must be strictly increasing within (0, 1)")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation fraction must be in (0, 1)")

    @property
    def median_index(self) -> int:
        return int(np.argmin(np.abs(np.asarray(self.quantiles) - 0.5)))


@dataclass
class QuantileForecast:
    """Latency forecast per horizon step and quantile, in milliseconds."""

    quantiles: tuple[float, ...]
    values: np.ndarray  # (horizon, len(quantiles)), non-decreasing per row
    window_start: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.quantiles):
            raise ValueError("forecast values must be (horizon, n_quantiles)")
        if np.any(np.diff(self.values, axis=1) < -1e-9):
            raise ValueError("quantile values must be non-decreasing per step")

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    @property
    def median(self) -> np.ndarray:
        idx = int(np.argmin(np.abs(np.asarray(self.quantiles) - 0.5)))
        return self.values[:, idx]

    def band(self, low: float, high: float) -> tuple[np.ndarray, np.ndarray]:
        qs = list(self.quantiles)
        return self.values[:, qs.index(low)], self.values[:, qs.index(high)]


@dataclass
class ImportanceSeries:
    """Per-step feature weights from variable selection plus the
    head-averaged attention profile of the decoder."""

    encoder_features: tuple[str, ...]
    decoder_features: tuple[str, ...]
    encoder_variable_importance: np.ndarray  # (encoder_steps, n_enc)
    decoder_variable_importance: np.ndarray  # (decoder_steps, n_dec)
    attention_profile: np.ndarray  # (decoder_steps, encoder_steps + decoder_steps)

    def __post_init__(self):
        for name, arr in (
            ("encoder", self.encoder_variable_importance),
            ("decoder", self.decoder_variable_importance),
            ("attention", self.attention_profile),
        ):
            if np.any(arr < -1e-12):
                raise ValueError(f"{name} weights must be non-negative")
            if np.max(np.abs(arr.sum(axis=1) - 1.0)) > 1e-6:
                raise ValueError(f"{name} weight rows must sum to one")

    def mean_decoder_importance(self) -> dict[str, float]:
        means = self.decoder_variable_importance.mean(axis=0)
        return {name: float(v) for name, v in zip(self.decoder_features, means)}


class TemporalFusionTransformer:
    """The assembled model; one instance forecasts one target trace."""

    def __init__(self, config: TftConfig, encoder_features: Sequence[str],
                 decoder_features: Sequence[str]):
        if len(encoder_features) < 1 or len(decoder_features) < 1:
            raise ValueError("need at least one encoder and one decoder feature")
        self.config = config
        self.encoder_features = tuple(encoder_features)  # includes the target, last
        self.decoder_features = tuple(decoder_features)
        h = config.hidden_size
        n_enc, n_dec = len(self.encoder_features), len(self.decoder_features)
        store = nn.ParamStore(seed=config.seed)
        self.store = store

        self.enc_embed = [nn.Linear(store, f"embed.enc.{i}", 1, h) for i in range(n_enc)]
        self.dec_embed = [nn.Linear(store, f"embed.dec.{i}", 1, h) for i in range(n_dec)]
        self.enc_select = nn.Grn(store, "vsn.enc.select", n_enc * h, n_enc,
                                 hidden=h, dropout=config.dropout)
        self.dec_select = nn.Grn(store, "vsn.dec.select", n_dec * h, n_dec,
                                 hidden=h, dropout=config.dropout)
        self.enc_feature_grns = [
            nn.Grn(store, f"vsn.enc.feat.{i}", h, h, dropout=config.dropout) for i in range(n_enc)
        ]
        self.dec_feature_grns = [
            nn.Grn(store, f"vsn.dec.feat.{i}", h, h, dropout=config.dropout) for i in range(n_dec)
        ]
        self.lstm_encoder = nn.LstmCell(store, "lstm.encoder", h, h)
        self.lstm_decoder = nn.LstmCell(store, "lstm.decoder", h, h)
        self.post_lstm = nn.GateAddNorm(store, "post_lstm", h, dropout=config.dropout)
        self.enrichment = nn.Grn(store, "enrichment", h, h, dropout=config.dropout)
        self.attention = nn.InterpretableAttention(
            store, "attention", h, config.attention_heads, dropout=config.dropout
        )
        self.post_attention = nn.GateAddNorm(store, "post_attention", h, dropout=config.dropout)
        self.final_grn = nn.Grn(store, "final", h, h, dropout=config.dropout)
        self.heads = [
            nn.Linear(store, f"head.q{i}", h, 1) for i in range(len(config.quantiles))
        ]
        self.feature_scaling: "FeatureScaling | None" = None  # set by train()

    def parameter_count(self) -> int:
        return self.store.parameter_count()

    def _vsn(self, flat: Tensor, embeds, select, feature_grns, training, rng):
        embedded = [embed(ad.narrow(flat, 1, i, 1)) for i, embed in enumerate(embeds)]
        logits = select(ad.concat(embedded, axis=1), training=training, rng=rng)
        weights = ad.softmax(logits, axis=-1)
        combined = None
        for i, grn in enumerate(feature_grns):
            term = ad.mul(ad.narrow(weights, 1, i, 1), grn(embedded[i], training=training, rng=rng))
            combined = term if combined is None else ad.add(combined, term)
        return combined, weights

    def forward(self, enc: np.ndarray, dec: np.ndarray, training: bool = False,
                rng: np.random.Generator | None = None) -> dict[str, Tensor]:
        """enc is (batch, k, n_enc) and dec is (batch, tau, n_dec), both
        already normalized; returns quantile outputs plus the
        interpretation weights."""
        cfg = self.config
        b, k, n_enc = enc.shape
        _, tau, n_dec = dec.shape
        if n_enc != len(self.encoder_features) or n_dec != len(self.decoder_features):
            raise ValueError("feature dimensions do not match the model")
        h = cfg.hidden_size

        enc_vsn, enc_w = self._vsn(
            Tensor(enc.reshape(b * k, n_enc)), self.enc_embed, self.enc_select,
            self.enc_feature_grns, training, rng,
        )
        dec_vsn, dec_w = self._vsn(
            Tensor(dec.reshape(b * tau, n_dec)), self.dec_embed, self.dec_select,
            self.dec_feature_grns, training, rng,
        )
        enc_seq = ad.reshape(enc_vsn, (b, k, h))
        dec_seq = ad.reshape(dec_vsn, (b, tau, h))

        state_h = Tensor(np.zeros((b, h)))
        state_c = Tensor(np.zeros((b, h)))
        steps = []
        for t in range(k):
            x_t = ad.reshape(ad.narrow(enc_seq, 1, t, 1), (b, h))
            state_h, state_c = self.lstm_encoder.step(x_t, state_h, state_c)
            steps.append(ad.reshape(state_h, (b, 1, h)))
        for t in range(tau):
            x_t = ad.reshape(ad.narrow(dec_seq, 1, t, 1), (b, h))
            state_h, state_c = self.lstm_decoder.step(x_t, state_h, state_c)
            steps.append(ad.reshape(state_h, (b, 1, h)))
        lstm_flat = ad.reshape(ad.concat(steps, axis=1), (b * (k + tau), h))
        vsn_flat = ad.reshape(ad.concat([enc_seq, dec_seq], axis=1), (b * (k + tau), h))

        skip = self.post_lstm(lstm_flat, vsn_flat, training=training, rng=rng)
        enriched = self.enrichment(skip, training=training, rng=rng)
        enriched_seq = ad.reshape(enriched, (b, k + tau, h))
        queries = ad.narrow(enriched_seq, 1, k, tau)
        attended, attn_w = self.attention(
            queries, enriched_seq, mask=nn.causal_mask(tau, k + tau, offset=k),
            training=training, rng=rng,
        )
        gated = self.post_attention(
            ad.reshape(attended, (b * tau, h)), ad.reshape(queries, (b * tau, h)),
            training=training, rng=rng,
        )
        final = self.final_grn(gated, training=training, rng=rng)
        outputs = ad.concat([head(final) for head in self.heads], axis=1)
        return {
            "quantiles": ad.reshape(outputs, (b, tau, len(cfg.quantiles))),
            "encoder_weights": ad.reshape(enc_w, (b, k, n_enc)),
            "decoder_weights": ad.reshape(dec_w, (b, tau, n_dec)),
            "attention": attn_w,
        }


def build_model(config: TftConfig, encoder_features, decoder_features) -> TemporalFusionTransformer:
    """Assemble a model; feature arguments may be name lists or counts.

    The encoder side must already include the target as its last input.
    """
    if isinstance(encoder_features, int):
        encoder_features = [f"enc_{i}" for i in range(encoder_features)]
    if isinstance(decoder_features, int):
        decoder_features = [f"dec_{i}" for i in range(decoder_features)]
    return TemporalFusionTransformer(config, encoder_features, decoder_features)


# ---------------------------------------------------------------------------
# Window batching and normalization


@dataclass
class FeatureScaling:
    """Dataset-level min-max parameters for the covariate columns.

    The target is scaled per encoder window (so predictions invert
    exactly), but covariates need one consistent scale across windows:
    a series that happens to be flat inside one encoder window would
    otherwise blow up its future values by 1/range_floor.
    """

    params: dict[str, tuple[float, float]]  # name -> (lo, range)

    def transform(self, values: np.ndarray, names: Sequence[str]) -> np.ndarray:
        lo = np.array([self.params[n][0] for n in names])
        rng = np.array([self.params[n][1] for n in names])
        return (values - lo) / rng + EPSILON

    def to_dict(self) -> dict:
        return {name: [lo, rng] for name, (lo, rng) in self.params.items()}

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureScaling":
        return cls(params={name: (float(lo), float(rng)) for name, (lo, rng) in doc.items()})


def fit_feature_scaling(windows: Sequence[Window]) -> FeatureScaling:
    """Per-feature min-max over all encoder and decoder values of the
    given (training) windows."""
    names = windows[0].decoder.feature_names
    stacked = np.concatenate(
        [np.concatenate([w.encoder.values[:, : len(names)], w.decoder.values]) for w in windows]
    )
    lo = stacked.min(axis=0)
    rng = stacked.max(axis=0) - lo + RANGE_FLOOR
    return FeatureScaling(params={n: (float(l), float(r)) for n, l, r in zip(names, lo, rng)})


@dataclass
class PreparedBatch:
    enc: np.ndarray  # normalized (B, k, n_enc)
    dec: np.ndarray  # normalized (B, tau, n_dec)
    labels: np.ndarray  # normalized future target (B, tau)
    target_lo: np.ndarray  # (B,)
    target_range: np.ndarray  # (B,)
    starts: list[int]


def prepare_batch(windows: Sequence[Window], config: TftConfig,
                  scaling: FeatureScaling | None = None) -> PreparedBatch:
    """Stack windows into model inputs.

    Covariates are scaled with the dataset-level parameters; the target
    column and the labels are scaled per window by the encoder's
    statistics, which are kept for exact inversion of predictions.
    """
    k, tau = config.encoder_length, config.decoder_length
    enc_raw = np.stack([w.encoder.values for w in windows])
    dec_raw = np.stack([w.decoder.values for w in windows])
    labels_raw = np.stack([w.future_target for w in windows])
    if enc_raw.shape[1] != k or dec_raw.shape[1] != tau:
        raise ValueError(
            f"window lengths ({enc_raw.shape[1]}, {dec_raw.shape[1]}) do not match "
            f"the configured ({k}, {tau})"
        )
    if scaling is None:
        scaling = fit_feature_scaling(windows)
    names = windows[0].decoder.feature_names

    target_raw = enc_raw[:, :, -1]
    target_lo = target_raw.min(axis=1)
    target_range = target_raw.max(axis=1) - target_lo + RANGE_FLOOR
    target = (target_raw - target_lo[:, None]) / target_range[:, None] + EPSILON
    labels = (labels_raw - target_lo[:, None]) / target_range[:, None] + EPSILON

    enc_features = scaling.transform(enc_raw[:, :, :-1], names)
    dec = scaling.transform(dec_raw, names)
    if config.include_relative_time:
        b = enc_raw.shape[0]
        total = k + tau
        rel = np.arange(total, dtype=np.float64) / max(1, total - 1)
        enc_features = np.concatenate(
            [enc_features, np.tile(rel[:k], (b, 1))[:, :, None]], axis=2
        )
        dec = np.concatenate([dec, np.tile(rel[k:], (b, 1))[:, :, None]], axis=2)
    enc = np.concatenate([enc_features, target[:, :, None]], axis=2)
    return PreparedBatch(
        enc=enc, dec=dec, labels=labels,
        target_lo=target_lo, target_range=target_range,
        starts=[w.start for w in windows],
    )


def denormalize_target(values: np.ndarray, lo: float | np.ndarray, rng: float | np.ndarray) -> np.ndarray:
    return (values - EPSILON) * rng + lo


def _batch_loss(model: TemporalFusionTransformer, out_quantiles: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over windows of the pinball loss summed over quantiles and
    horizon steps."""
    b, tau, _ = out_quantiles.shape
    losses = []
    for qi, q in enumerate(model.config.quantiles):
        pred = ad.reshape(ad.narrow(out_quantiles, 2, qi, 1), (b, tau))
        err = ad.sub(labels, pred)
        losses.append(ad.total(nn.pinball(err, q)))
    summed = losses[0]
    for extra in losses[1:]:
        summed = ad.add(summed, extra)
    return ad.mul(summed, 1.0 / b)


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainingReport:
    train_loss: list[float]
    val_loss: list[float]
    stopped_epoch: int
    best_epoch: int
    n_train_windows: int
    n_val_windows: int
    config: dict = field(default_factory=dict)
    restart_scout_losses: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def split_windows(windows: Sequence[Window], validation_fraction: float) -> tuple[list, list]:
    """Chronological split with the validation share at the end."""
    n = len(windows)
    n_val = max(1, int(round(validation_fraction * n)))
    n_train = n - n_val
    if n_train < 1:
        raise ValueError(f"{n} windows leave no training data at {validation_fraction} validation")
    return list(windows[:n_train]), list(windows[n_train:])


def train(
    model: TemporalFusionTransformer,
    windows: Sequence[Window],
    config: TftConfig | None = None,
    on_epoch: Callable[[int, float, float], None] | None = None,
) -> TrainingReport:
    """Minimize the summed pinball loss with Adam and early stopping.

    Windows are split chronologically (validation last); the weights
    giving the best validation loss are restored at the end.  Fully
    deterministic for a fixed config seed.
    """
    config = config or model.config
    if not windows:
        raise ValueError("empty window set")
    train_windows, val_windows = split_windows(windows, config.validation_fraction)
    model.feature_scaling = fit_feature_scaling(train_windows)
    train_batch = prepare_batch(train_windows, config, model.feature_scaling)
    val_batch = prepare_batch(val_windows, config, model.feature_scaling)

    rng = np.random.default_rng(config.seed)
    optimizer = nn.Adam(model.store, lr=config.learning_rate, clip_norm=1.0)
    # halve the learning rate when validation stalls; cheap insurance
    # against the configured rate being too hot for a small model
    lr_patience = max(1, config.early_stopping_patience // 2)
    best_state = model.store.state_dict()
    best_val = np.inf
    best_epoch = 0
    last_reduction = 0
    train_losses: list[float] = []
    val_losses: list[float] = []
    stopped = 0

    n_train = len(train_windows)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        for lo_idx in range(0, n_train, config.batch_size):
            idx = order[lo_idx : lo_idx + config.batch_size]
            model.store.zero_grad()
            out = model.forward(train_batch.enc[idx], train_batch.dec[idx],
                                training=True, rng=rng)
            loss = _batch_loss(model, out["quantiles"], train_batch.labels[idx])
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.values) * len(idx)
        epoch_loss /= n_train

        val_loss = evaluate_loss(model, val_batch)
        train_losses.append(epoch_loss)
        val_losses.append(val_loss)
        stopped = epoch
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss, val_loss)
        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best_epoch = epoch
            best_state = model.store.state_dict()
        elif epoch - best_epoch >= max(config.early_stopping_patience, 0):
            break
        elif epoch - max(best_epoch, last_reduction) >= lr_patience and optimizer.lr > 1e-4:
            optimizer.lr = max(optimizer.lr * 0.5, 1e-4)
            last_reduction = epoch

    model.store.load_state_dict(best_state)
    return TrainingReport(
        train_loss=train_losses,
        val_loss=val_losses,
        stopped_epoch=stopped,
        best_epoch=best_epoch,
        n_train_windows=len(train_windows),
        n_val_windows=len(val_windows),
        config={
            "hidden_size": config.hidden_size,
            "attention_heads": config.attention_heads,
            "dropout": config.dropout,
            "learning_rate": config.learning_rate,
            "batch_size": config.batch_size,
            "max_epochs": config.max_epochs,
            "encoder_length": config.encoder_length,
            "decoder_length": config.decoder_length,
            "quantiles": list(config.quantiles),
            "early_stopping_patience": config.early_stopping_patience,
            "validation_fraction": config.validation_fraction,
            "seed": config.seed,
        },
    )


def train_with_restarts(
    config: TftConfig,
    encoder_features: Sequence[str],
    decoder_features: Sequence[str],
    windows: Sequence[Window],
    restarts: int = 3,
    scout_epochs: int = 5,
    on_epoch: Callable[[int, float, float], None] | None = None,
) -> tuple[TemporalFusionTransformer, TrainingReport]:
    """Race several fresh initializations for a few epochs, then fully
    train the one with the best validation loss.

    Small models under an aggressive learning rate occasionally start
    in a poor basin; the short scouting phase screens those out using
    validation loss only.  Deterministic: candidate seeds derive from
    the configured seed.
    """
    if restarts <= 1:
        model = TemporalFusionTransformer(config, encoder_features, decoder_features)
        return model, train(model, windows, on_epoch=on_epoch)
    scout_losses = []
    candidates = [replace(config, seed=config.seed + 101 * r) for r in range(restarts)]
    for candidate in candidates:
        scout_cfg = replace(candidate, max_epochs=min(scout_epochs, candidate.max_epochs))
        scout = TemporalFusionTransformer(scout_cfg, encoder_features, decoder_features)
        scout_report = train(scout, windows)
        scout_losses.append(min(scout_report.val_loss))
    winner = candidates[int(np.argmin(scout_losses))]
    model = TemporalFusionTransformer(winner, encoder_features, decoder_features)
    report = train(model, windows, on_epoch=on_epoch)
    report.restart_scout_losses = [float(v) for v in scout_losses]
    return model, report


def evaluate_loss(model: TemporalFusionTransformer, batch: PreparedBatch) -> float:
    total_loss = 0.0
    n = batch.enc.shape[0]
    bs = model.config.batch_size
    for lo in range(0, n, bs):
        out = model.forward(batch.enc[lo : lo + bs], batch.dec[lo : lo + bs], training=False)
        loss = _batch_loss(model, out["quantiles"], batch.labels[lo : lo + bs])
        total_loss += float(loss.values) * min(bs, n - lo)
    return total_loss / n


# ---------------------------------------------------------------------------
# Prediction and interpretation


def predict(model: TemporalFusionTransformer, window: Window) -> QuantileForecast:
    """Forecast one window, de-normalized to milliseconds and sorted per
    step so quantiles never cross."""
    return predict_many(model, [window])[0]


def predict_many(model: TemporalFusionTransformer, windows: Sequence[Window]) -> list[QuantileForecast]:
    config = model.config
    batch = prepare_batch(windows, config, _require_scaling(model))
    forecasts = []
    bs = config.batch_size
    for lo in range(0, batch.enc.shape[0], bs):
        out = model.forward(batch.enc[lo : lo + bs], batch.dec[lo : lo + bs], training=False)
        raw = np.sort(out["quantiles"].values, axis=2)  # quantile non-crossing
        for i in range(raw.shape[0]):
            ms = denormalize_target(raw[i], batch.target_lo[lo + i], batch.target_range[lo + i])
            forecasts.append(
                QuantileForecast(
                    quantiles=tuple(config.quantiles),
                    values=np.maximum(ms, 0.0),
                    window_start=batch.starts[lo + i],
                )
            )
    return forecasts


def _require_scaling(model: TemporalFusionTransformer) -> FeatureScaling:
    if model.feature_scaling is None:
        raise ValueError("model has no feature scaling; train it or load a checkpoint first")
    return model.feature_scaling


def interpret(model: TemporalFusionTransformer, window: Window) -> ImportanceSeries:
    """Export the variable-selection weights and attention profile for
    one window."""
    batch = prepare_batch([window], model.config, _require_scaling(model))
    out = model.forward(batch.enc, batch.dec, training=False)
    enc_features = model.encoder_features
    dec_features = model.decoder_features
    return ImportanceSeries(
        encoder_features=enc_features,
        decoder_features=dec_features,
        encoder_variable_importance=out["encoder_weights"].values[0],
        decoder_variable_importance=out["decoder_weights"].values[0],
        attention_profile=out["attention"].values[0],
    )


def evaluate(forecast_median: Sequence[float], actual: Sequence[float]) -> dict[str, float]:
    """RMSE and R^2 of a point forecast against the realized values."""
    pred = np.asarray(forecast_median, dtype=np.float64)
    act = np.asarray(actual, dtype=np.float64)
    if pred.shape != act.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {act.shape}")
    if pred.size < 2:
        raise ValueError("need at least two points")
    sse = float(np.sum((pred - act) ** 2))
    sst = float(np.sum((act - act.mean()) ** 2))
    if sst == 0.0:
        raise ValueError("actuals have zero variance; R^2 is undefined")
    return {"rmse": float(np.sqrt(sse / act.size)), "r2": 1.0 - sse / sst}


def pooled_forecast_metrics(model: TemporalFusionTransformer, windows: Sequence[Window]) -> dict[str, float]:
    """Median forecasts for many windows pooled into one RMSE/R^2."""
    forecasts = predict_many(model, windows)
    pred = np.concatenate([f.median for f in forecasts])
    actual = np.concatenate([w.future_target for w in windows])
    return evaluate(pred, actual)


def persistence_metrics(windows: Sequence[Window]) -> dict[str, float]:
    """Baseline that repeats the last observed target over the horizon."""
    pred = np.concatenate([np.full_like(w.future_target, w.encoder.values[-1, -1]) for w in windows])
    actual = np.concatenate([w.future_target for w in windows])
    return evaluate(pred, actual)


def band_coverage(model: TemporalFusionTransformer, windows: Sequence[Window],
                  low: float = 0.1, high: float = 0.9) -> float:
    """Fraction of realized values inside the [low, high] forecast band."""
    inside = 0
    count = 0
    for w, f in zip(windows, predict_many(model, windows)):
        lo_band, hi_band = f.band(low, high)
        inside += int(np.sum((w.future_target >= lo_band) & (w.future_target <= hi_band)))
        count += w.future_target.size
    return inside / count


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(model: TemporalFusionTransformer, path) -> None:
    doc = {
        "format_version": nn.layers.CHECKPOINT_FORMAT_VERSION,
        "config": json.loads(json.dumps(asdict(model.config))),
        "encoder_features": list(model.encoder_features),
        "decoder_features": list(model.decoder_features),
        "feature_scaling": model.feature_scaling.to_dict() if model.feature_scaling else None,
        "params": json.loads(model.store.to_json()),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> TemporalFusionTransformer:
    with open(path) as fh:
        doc = json.load(fh)
    cfg_doc = dict(doc["config"])
    cfg_doc["quantiles"] = tuple(cfg_doc["quantiles"])
    config = TftConfig(**cfg_doc)
    model = TemporalFusionTransformer(config, doc["encoder_features"], doc["decoder_features"])
    model.store.load_json(json.dumps(doc["params"]))
    if doc.get("feature_scaling"):
        model.feature_scaling = FeatureScaling.from_dict(doc["feature_scaling"])
    return model
