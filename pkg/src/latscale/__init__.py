"""latscale: interpretable end-to-end latency forecasting and resource
autoscaling for microservice applications.

The pipeline: simulate (or load) per-trace latency series, train an
attention-based quantile forecaster, read its feature-importance
scores, fit one kernel ridge regressor per feature against the
violation-corrected latency, solve a box-constrained least squares
problem over the combination weights, and emit the weights as
per-resource scaling factors.
"""

from . import krr, nn, scaler, simulator, tft, trace_data
from .scaler import ScalingPlan, SlaSpec
from .simulator import Scenario, build_robotshop_graph, simulate
from .tft import QuantileForecast, TemporalFusionTransformer, TftConfig
from .trace_data import TraceDataset, WindowSpec, load_dataset, make_windows, p95

__version__ = "0.1.0"

__all__ = [
    "QuantileForecast",
    "Scenario",
    "ScalingPlan",
    "SlaSpec",
    "TemporalFusionTransformer",
    "TftConfig",
    "TraceDataset",
    "WindowSpec",
    "build_robotshop_graph",
    "krr",
    "load_dataset",
    "make_windows",
    "nn",
    "p95",
    "scaler",
    "simulate",
    "simulator",
    "tft",
    "trace_data",
]
