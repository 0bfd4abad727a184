"""Time-indexed metric series for microservice traces.

Holds aligned series of front-end calls, per-service resources, and
per-trace p95 latency; provides CSV ingestion, sliding encoder/decoder
windows, and per-window min-max normalization that keeps every value
strictly positive (so the model never sees zeros or negatives).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

# Normalization constants.  EPSILON shifts normalized values away from
# zero; RANGE_FLOOR guards constant series against division by zero.
EPSILON = 0.01
RANGE_FLOOR = 1e-8


class SeriesKind(str, Enum):
    FRONT_END_CALLS = "front_end_calls"
    HORIZONTAL_RESOURCE = "horizontal_resource"
    VERTICAL_RESOURCE = "vertical_resource"
    TARGET_LATENCY = "target_latency"


# Column-name prefix -> series kind.  Columns are "<prefix>.<owner>",
# e.g. "cps.green", "pods.cart", "latency_p95.green".
KIND_BY_PREFIX: dict[str, SeriesKind] = {
    "cps": SeriesKind.FRONT_END_CALLS,
    "pods": SeriesKind.HORIZONTAL_RESOURCE,
    "cpu": SeriesKind.VERTICAL_RESOURCE,
    "mem": SeriesKind.VERTICAL_RESOURCE,
    "latency_p95": SeriesKind.TARGET_LATENCY,
}

RESOURCE_KINDS = (SeriesKind.HORIZONTAL_RESOURCE, SeriesKind.VERTICAL_RESOURCE)


class DataFormatError(ValueError):
    """Malformed input data, with the offending row/column when known."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(message + (f" ({', '.join(loc)})" if loc else ""))
        self.row = row
        self.column = column


class DatasetTooShortError(ValueError):
    """Dataset has fewer steps than one encoder+decoder window."""


@dataclass(frozen=True)
class MetricSeries:
    """One named series, one value per time step.

    Units by kind: calls/s for front-end calls, pod count (stored as
    float) for horizontal resources, cores or bytes for vertical
    resources, milliseconds for latency targets.
    """

    name: str
    kind: SeriesKind
    values: np.ndarray
    microservice: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1:
            raise ValueError(f"series {self.name!r}: values must be 1-D")
        if self.kind in RESOURCE_KINDS and not self.microservice:
            raise ValueError(f"series {self.name!r}: resource series need a microservice")
        if self.kind is SeriesKind.TARGET_LATENCY and np.any(self.values < 0):
            raise ValueError(f"series {self.name!r}: latencies must be >= 0")
        if self.kind is SeriesKind.HORIZONTAL_RESOURCE and (
            np.any(self.values < 1) or np.any(self.values != np.round(self.values))
        ):
            raise ValueError(f"series {self.name!r}: pod counts must be positive integers")

    @property
    def owner(self) -> str:
        return self.name.split(".", 1)[1] if "." in self.name else self.name


@dataclass(frozen=True)
class TraceDataset:
    """Aligned collection of metric series over a shared time index.

    Treated as immutable after construction; windowing and
    normalization never mutate it.
    """

    time_index: np.ndarray
    series: tuple[MetricSeries, ...]

    def __post_init__(self):
        object.__setattr__(self, "time_index", np.asarray(self.time_index, dtype=np.int64))
        object.__setattr__(self, "series", tuple(self.series))
        n = len(self.time_index)
        if n == 0:
            raise ValueError("empty time index")
        steps = np.diff(self.time_index)
        if np.any(steps <= 0) or (n > 1 and np.any(steps != steps[0])):
            raise ValueError("time index must be strictly increasing with a uniform step")
        for s in self.series:
            if len(s.values) != n:
                raise ValueError(f"series {s.name!r} has {len(s.values)} values, expected {n}")
        names = [s.name for s in self.series]
        if len(set(names)) != len(names):
            raise ValueError("duplicate series names")
        targets = [s for s in self.series if s.kind is SeriesKind.TARGET_LATENCY]
        owners = [t.owner for t in targets]
        if len(set(owners)) != len(owners):
            raise ValueError("more than one target series for a trace")

    @property
    def n_steps(self) -> int:
        return len(self.time_index)

    @property
    def traces(self) -> list[str]:
        return [s.owner for s in self.series if s.kind is SeriesKind.TARGET_LATENCY]

    @property
    def microservices(self) -> list[str]:
        seen: dict[str, None] = {}
        for s in self.series:
            if s.kind in RESOURCE_KINDS and s.microservice:
                seen.setdefault(s.microservice)
        return list(seen)

    def get(self, name: str) -> MetricSeries:
        for s in self.series:
            if s.name == name:
                return s
        raise KeyError(name)

    def target(self, trace: str) -> MetricSeries:
        for s in self.series:
            if s.kind is SeriesKind.TARGET_LATENCY and s.owner == trace:
                return s
        raise KeyError(f"no target series for trace {trace!r}")

    def feature_names(self, resource_mode: str = "both") -> list[str]:
        """Non-target columns, optionally restricted to horizontal
        (pods) or vertical (cpu/mem) resources."""
        if resource_mode not in ("horizontal", "vertical", "both"):
            raise ValueError(f"unknown resource mode {resource_mode!r}")
        names = []
        for s in self.series:
            if s.kind is SeriesKind.TARGET_LATENCY:
                continue
            if s.kind is SeriesKind.HORIZONTAL_RESOURCE and resource_mode == "vertical":
                continue
            if s.kind is SeriesKind.VERTICAL_RESOURCE and resource_mode == "horizontal":
                continue
            names.append(s.name)
        return names


def _classify_column(column: str) -> tuple[SeriesKind, str | None]:
    prefix, _, owner = column.partition(".")
    if not owner or prefix not in KIND_BY_PREFIX:
        raise DataFormatError(
            f"cannot classify column {column!r}; expected '<kind>.<owner>' with kind in "
            f"{sorted(KIND_BY_PREFIX)}",
            column=column,
        )
    kind = KIND_BY_PREFIX[prefix]
    service = owner if kind in RESOURCE_KINDS else None
    return kind, service


def load_dataset(path, schema: Mapping[str, tuple[SeriesKind, str | None]] | None = None) -> TraceDataset:
    """Load a TraceDataset from CSV.

    First column must be the integer time index ``t``; remaining
    columns follow the ``<kind>.<owner>`` naming convention unless
    ``schema`` maps a column name to an explicit (kind, microservice).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("missing column header: file is empty") from None
        if not header or header[0] != "t":
            raise DataFormatError("first column must be the time index 't'", column="t")
        if len(header) < 2:
            raise DataFormatError("no data columns beside the time index")

        columns: list[list[float]] = [[] for _ in header]
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(
                    f"ragged row: {len(row)} cells, expected {len(header)}", row=row_no
                )
            for col_name, cell, bucket in zip(header, row, columns):
                try:
                    bucket.append(float(cell))
                except ValueError:
                    raise DataFormatError(
                        f"non-numeric cell {cell!r}", row=row_no, column=col_name
                    ) from None

    if not columns[0]:
        raise DataFormatError("no data rows")
    t = np.asarray(columns[0])
    if np.any(t != np.round(t)):
        raise DataFormatError("time index must be integer", column="t")
    t = t.astype(np.int64)
    for i in range(1, len(t)):
        if t[i] == t[i - 1]:
            raise DataFormatError(f"duplicated time index {t[i]}", row=i + 2, column="t")
        if t[i] < t[i - 1]:
            raise DataFormatError(f"time index out of order at {t[i]}", row=i + 2, column="t")

    series = []
    for name, values in zip(header[1:], columns[1:]):
        if schema and name in schema:
            kind, service = schema[name]
        else:
            kind, service = _classify_column(name)
        series.append(MetricSeries(name=name, kind=kind, values=np.asarray(values), microservice=service))
    return TraceDataset(time_index=t, series=tuple(series))


def save_dataset(dataset: TraceDataset, path) -> None:
    """Write a dataset back to the CSV schema accepted by load_dataset."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [s.name for s in dataset.series])
        for i, t in enumerate(dataset.time_index):
            writer.writerow([int(t)] + [repr(float(s.values[i])) for s in dataset.series])


def p95(samples: Sequence[float] | np.ndarray) -> float:
    """95th percentile by the nearest-rank method.

    Returns the smallest sample value v such that at least 95% of the
    samples are <= v.
    """
    return percentile_nearest_rank(samples, 95.0)


def percentile_nearest_rank(samples: Sequence[float] | np.ndarray, pct: float) -> float:
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("percentile of an empty sequence")
    if not 0.0 < pct <= 100.0:
        raise ValueError(f"percentile must be in (0, 100], got {pct}")
    rank = math.ceil(pct / 100.0 * arr.size)  # 1-based order statistic
    return float(np.partition(arr, rank - 1)[rank - 1])


@dataclass(frozen=True)
class WindowSpec:
    """Encoder/decoder lengths for sliding windows."""

    encoder_length: int = 400
    decoder_length: int = 50

    def __post_init__(self):
        if self.encoder_length < 1 or self.decoder_length < 1:
            raise ValueError("encoder and decoder lengths must be >= 1")

    @property
    def total(self) -> int:
        return self.encoder_length + self.decoder_length


@dataclass(frozen=True)
class Block:
    """A contiguous slab of feature columns: values[time, feature]."""

    feature_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 2 or self.values.shape[1] != len(self.feature_names):
            raise ValueError("block values must be (steps, len(feature_names))")


@dataclass(frozen=True)
class Window:
    """One training/prediction window.

    The encoder block carries the features plus the target history; the
    decoder block carries future features only.  ``future_target`` is
    the supervision label for the decoder steps and is never part of
    the decoder inputs.
    """

    start: int
    encoder: Block
    decoder: Block
    future_target: np.ndarray
    target_name: str


def make_windows(
    dataset: TraceDataset,
    spec: WindowSpec,
    target_trace: str,
    feature_names: Sequence[str] | None = None,
) -> list[Window]:
    """Slide (encoder, decoder) windows over the dataset with stride 1.

    Yields ``n_steps - encoder_length - decoder_length + 1`` windows.
    The target series appears only in the encoder block and in the
    label array, never in the decoder block.
    """
    if feature_names is None:
        feature_names = dataset.feature_names()
    feature_names = list(feature_names)
    target = dataset.target(target_trace)
    if target.name in feature_names:
        raise ValueError(f"target series {target.name!r} listed among the features")
    k, tau = spec.encoder_length, spec.decoder_length
    n = dataset.n_steps
    if n < k + tau:
        raise DatasetTooShortError(
            f"need at least {k + tau} steps for encoder {k} + decoder {tau}, have {n}"
        )
    features = np.column_stack([dataset.get(name).values for name in feature_names])
    y = target.values
    enc_names = tuple(feature_names) + (target.name,)
    dec_names = tuple(feature_names)

    windows = []
    for start in range(n - k - tau + 1):
        enc = np.column_stack([features[start : start + k], y[start : start + k]])
        dec = features[start + k : start + k + tau]
        windows.append(
            Window(
                start=start,
                encoder=Block(enc_names, enc),
                decoder=Block(dec_names, dec),
                future_target=y[start + k : start + k + tau].copy(),
                target_name=target.name,
            )
        )
    return windows


@dataclass
class NormalizationState:
    """Per-series affine parameters recorded for exact inversion."""

    window_start: int
    params: dict[str, tuple[float, float, float]] = field(default_factory=dict)  # name -> (min, range, eps)

    def normalize_values(self, name: str, values: np.ndarray) -> np.ndarray:
        lo, rng, eps = self.params[name]
        return (np.asarray(values, dtype=np.float64) - lo) / rng + eps

    def invert(self, name: str, values: np.ndarray) -> np.ndarray:
        lo, rng, eps = self.params[name]
        return (np.asarray(values, dtype=np.float64) - eps) * rng + lo

    def to_json(self) -> str:
        doc = [
            {"series": name, "window_start": self.window_start, "min": lo, "range": rng, "epsilon": eps}
            for name, (lo, rng, eps) in self.params.items()
        ]
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "NormalizationState":
        doc = json.loads(text)
        state = cls(window_start=doc[0]["window_start"] if doc else 0)
        for entry in doc:
            state.params[entry["series"]] = (entry["min"], entry["range"], entry["epsilon"])
        return state


def fit_normalization(block: Block, window_start: int = 0) -> NormalizationState:
    """Fit per-series min-max parameters over one block."""
    state = NormalizationState(window_start=window_start)
    for j, name in enumerate(block.feature_names):
        col = block.values[:, j]
        lo = float(np.min(col))
        rng = float(np.max(col) - lo) + RANGE_FLOOR
        state.params[name] = (lo, rng, EPSILON)
    return state


def normalize_window(block: Block, state: NormalizationState | None = None) -> tuple[Block, NormalizationState]:
    """Scale each series of the block into a strictly positive range.

    x' = (x - min) / (max - min + floor) + eps, with parameters fitted
    on this block unless ``state`` is given (e.g. applying encoder
    statistics to a decoder block).  Returns the scaled block and the
    state needed to invert predictions exactly.
    """
    if block.values.shape[0] == 0:
        raise ValueError("cannot normalize an empty block")
    if state is None:
        state = fit_normalization(block)
    out = np.empty_like(block.values)
    for j, name in enumerate(block.feature_names):
        out[:, j] = state.normalize_values(name, block.values[:, j])
    return Block(block.feature_names, out), state


def normalize_batch(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized window normalization for stacked arrays.

    ``values`` is (windows, steps, features); returns the scaled array
    plus per-window per-feature (min, range) arrays of shape
    (windows, 1, features).  Same formula as normalize_window.
    """
    lo = values.min(axis=1, keepdims=True)
    rng = values.max(axis=1, keepdims=True) - lo + RANGE_FLOOR
    return (values - lo) / rng + EPSILON, lo, rng
