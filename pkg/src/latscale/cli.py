"""Command-line entry point: simulate | train | predict | interpret |
plan | e2e | evaluate.

Every command is deterministic for a fixed (config, seed) pair and
writes plain CSV/JSON artifacts.  Exit codes: 0 success, 2 usage or
validation error, 3 runtime failure labeled with the failing stage.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import shutil
import sys
from dataclasses import dataclass, field, fields, replace
from importlib import resources as importlib_resources
from pathlib import Path

import numpy as np

from . import krr, scaler, tft
from .simulator import Scenario, apply_plan, load_scenario, scenario_to_dict
from .trace_data import WindowSpec, load_dataset, make_windows, p95, save_dataset

DEFAULT_FACTOR_BOXES = {
    "pods": scaler.DEFAULT_FACTOR_BOX,
    "cpu": scaler.DEFAULT_FACTOR_BOX,
    "mem": scaler.DEFAULT_FACTOR_BOX,
    "cps": scaler.DEFAULT_FACTOR_BOX,
}


class UsageError(Exception):
    """Bad flags, missing files, or invalid configuration."""


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage


@dataclass
class RunConfig:
    scenario: str | None = None
    dataset: str | None = None
    checkpoint: str | None = None
    trace: str = "green"
    resources: str = "both"
    features: list[str] | None = None
    seed: int | None = None
    duration: int | None = None
    sla_ms: float | None = None
    sla_factor: float = 0.8
    steady_window: int = 400
    objective_target: str = "desired"
    pin_intercept: bool = False
    restarts: int = 1
    window_start: int | None = None
    out: str = "."
    quiet: bool = False
    tft: tft.TftConfig = field(default_factory=tft.TftConfig)
    grid: krr.GridSearchSpec = field(default_factory=krr.GridSearchSpec)
    intercept_box: tuple[float, float] = scaler.DEFAULT_INTERCEPT_BOX
    factor_boxes: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_FACTOR_BOXES)
    )


def _parse_pair(text: str) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise UsageError(f"expected 'lo, hi', got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def load_run_config(path: str | None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    if not Path(path).exists():
        raise UsageError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)

    if parser.has_section("run"):
        run = parser["run"]
        cfg.scenario = run.get("scenario", cfg.scenario)
        cfg.dataset = run.get("dataset", cfg.dataset)
        cfg.checkpoint = run.get("checkpoint", cfg.checkpoint)
        cfg.trace = run.get("trace", cfg.trace)
        cfg.resources = run.get("resources", cfg.resources)
        if run.get("features"):
            cfg.features = _parse_list(run["features"])
        if run.get("seed"):
            cfg.seed = run.getint("seed")
        if run.get("sla_ms"):
            cfg.sla_ms = run.getfloat("sla_ms")
        cfg.sla_factor = run.getfloat("sla_factor", cfg.sla_factor)
        cfg.steady_window = run.getint("steady_window", cfg.steady_window)
        cfg.objective_target = run.get("objective_target", cfg.objective_target)
        cfg.pin_intercept = run.getboolean("pin_intercept", cfg.pin_intercept)
        cfg.restarts = run.getint("restarts", cfg.restarts)

    if parser.has_section("tft"):
        section = parser["tft"]
        overrides = {}
        for f in fields(tft.TftConfig):
            if f.name not in section:
                continue
            if f.name == "quantiles":
                overrides[f.name] = tuple(float(q) for q in _parse_list(section[f.name]))
            elif f.type in ("int", int):
                overrides[f.name] = section.getint(f.name)
            elif f.type in ("float", float):
                overrides[f.name] = section.getfloat(f.name)
            elif f.type in ("bool", bool):
                overrides[f.name] = section.getboolean(f.name)
        cfg.tft = replace(cfg.tft, **overrides)

    if parser.has_section("grid"):
        section = parser["grid"]
        kwargs = {}
        if section.get("alpha_grid"):
            kwargs["alpha_grid"] = tuple(float(a) for a in _parse_list(section["alpha_grid"]))
        if section.get("beta_grid"):
            kwargs["beta_grid"] = tuple(float(b) for b in _parse_list(section["beta_grid"]))
        if section.get("folds"):
            kwargs["folds"] = section.getint("folds")
        cfg.grid = krr.GridSearchSpec(**kwargs)

    if parser.has_section("boxes"):
        section = parser["boxes"]
        if section.get("intercept"):
            cfg.intercept_box = _parse_pair(section["intercept"])
        for resource in ("pods", "cpu", "mem", "cps"):
            if section.get(resource):
                cfg.factor_boxes[resource] = _parse_pair(section[resource])
    return cfg


def bundled_names(kind: str) -> list[str]:
    root = importlib_resources.files("latscale") / kind
    return sorted(p.name.rsplit(".", 1)[0] for p in root.iterdir())


def resolve_scenario(name_or_path: str) -> Scenario:
    path = Path(name_or_path)
    if path.exists():
        return load_scenario(path)
    bundled = importlib_resources.files("latscale") / "scenarios" / f"{name_or_path}.json"
    if bundled.is_file():
        with importlib_resources.as_file(bundled) as real:
            return load_scenario(real)
    raise UsageError(
        f"scenario {name_or_path!r} is neither a file nor a bundled name "
        f"(bundled: {', '.join(bundled_names('scenarios'))})"
    )


def _say(cfg: RunConfig, message: str):
    if not cfg.quiet:
        print(message, file=sys.stderr)


def _stage(name: str):
    class _StageContext:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, (UsageError, StageError)):
                raise StageError(name, exc) from exc
            return False

    return _StageContext()


# ---------------------------------------------------------------------------
# Artifact writers and readers


def write_forecast_csv(forecast: tft.QuantileForecast, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "quantile", "value_ms"])
        for step in range(forecast.horizon):
            for qi, q in enumerate(forecast.quantiles):
                writer.writerow([step + 1, repr(float(q)), repr(float(forecast.values[step, qi]))])


def read_forecast_csv(path) -> tft.QuantileForecast:
    rows: dict[int, dict[float, float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(int(row["step"]), {})[float(row["quantile"])] = float(row["value_ms"])
    steps = sorted(rows)
    quantiles = tuple(sorted(rows[steps[0]]))
    values = np.array([[rows[s][q] for q in quantiles] for s in steps])
    return tft.QuantileForecast(quantiles=quantiles, values=values)


def write_importance_csv(features, matrix, path, column: str = "feature"):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", column, "weight"])
        for step in range(matrix.shape[0]):
            for name, value in zip(features, matrix[step]):
                writer.writerow([step + 1, name, repr(float(value))])


def read_importance_csv(path) -> tuple[list[str], np.ndarray]:
    per_step: dict[int, dict[str, float]] = {}
    order: list[str] = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            step = int(row["step"])
            if row["feature"] not in order:
                order.append(row["feature"])
            per_step.setdefault(step, {})[row["feature"]] = float(row["weight"])
    matrix = np.array([[per_step[s][f] for f in order] for s in sorted(per_step)])
    return order, matrix


def write_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Shared pipeline pieces


def _load_dataset_or_fail(cfg: RunConfig, flag: str = "--dataset"):
    if not cfg.dataset:
        raise UsageError(f"{flag} (or the config's dataset entry) is required")
    if not Path(cfg.dataset).exists():
        raise UsageError(f"dataset file not found: {cfg.dataset}")
    return load_dataset(cfg.dataset)


def _select_features(cfg: RunConfig, dataset) -> list[str]:
    if cfg.features:
        missing = [f for f in cfg.features if not _has_series(dataset, f)]
        if missing:
            raise UsageError(f"features not in dataset: {', '.join(missing)}")
        return list(cfg.features)
    return dataset.feature_names(cfg.resources)


def _has_series(dataset, name: str) -> bool:
    try:
        dataset.get(name)
        return True
    except KeyError:
        return False


def _dataset_windows(cfg: RunConfig, dataset, features, tft_config):
    spec = WindowSpec(tft_config.encoder_length, tft_config.decoder_length)
    try:
        return make_windows(dataset, spec, cfg.trace, features)
    except Exception as exc:
        raise UsageError(str(exc)) from exc


def _train_model(cfg: RunConfig, dataset, out_dir: Path):
    features = _select_features(cfg, dataset)
    tft_config = cfg.tft if cfg.seed is None else replace(cfg.tft, seed=cfg.seed)
    windows = _dataset_windows(cfg, dataset, features, tft_config)
    target_name = dataset.target(cfg.trace).name
    enc_features = list(features) + [target_name]
    epoch_log = None if cfg.quiet else (
        lambda e, tr, vl: print(f"epoch {e}: train {tr:.4f} val {vl:.4f}", file=sys.stderr)
    )
    model, report = tft.train_with_restarts(
        tft_config, enc_features, features, windows,
        restarts=cfg.restarts, on_epoch=epoch_log,
    )
    tft.save_checkpoint(model, out_dir / "checkpoint.json")
    (out_dir / "training_report.json").write_text(report.to_json() + "\n")
    return model, report, windows


def _model_windows(cfg: RunConfig, model, dataset):
    features = list(model.decoder_features)
    missing = [f for f in features if not _has_series(dataset, f)]
    if missing:
        raise UsageError(
            f"checkpoint/feature mismatch: dataset lacks {', '.join(missing)}"
        )
    return _dataset_windows(cfg, dataset, features, model.config)


def _pick_window(cfg: RunConfig, windows):
    if cfg.window_start is None:
        return windows[-1]
    for w in windows:
        if w.start == cfg.window_start:
            return w
    raise UsageError(f"no window starts at step {cfg.window_start}")


def _build_catalog(features, dataset, scenario: Scenario | None):
    catalog = []
    bounds = {}
    for name in features:
        prefix, _, owner = name.partition(".")
        actionable = prefix in ("pods", "cpu", "mem")
        current = float(dataset.get(name).values[-1]) if _has_series(dataset, name) else 0.0
        catalog.append(
            scaler.FeatureSpec(
                name=name,
                actionable=actionable,
                microservice=owner if actionable else None,
                resource=prefix if actionable else None,
                current=current,
            )
        )
        if actionable:
            svc = scenario.configs.get(owner) if scenario else None
            if prefix == "pods":
                bounds[name] = (1.0, float(svc.pods_max) if svc else 16.0)
            elif prefix == "cpu":
                bounds[name] = (0.05, float(svc.cpu_max_cores) if svc else 32.0)
            else:
                bounds[name] = (2.0**24, float(svc.mem_max_bytes) if svc else 64e9)
    return catalog, bounds


def _theta_boxes(cfg: RunConfig, features):
    boxes = []
    for name in features:
        prefix = name.partition(".")[0]
        kind = prefix if prefix in ("pods", "cpu", "mem", "cps") else "cps"
        boxes.append(tuple(cfg.factor_boxes[kind]))
    intercept = (0.0, 0.0) if cfg.pin_intercept else tuple(cfg.intercept_box)
    return intercept, boxes


def _solve_plan(cfg: RunConfig, forecast, report, features, importance, dataset,
                scenario, out_dir: Path, sla_ms: float):
    """KRR fit, theta solve, and plan emission for a detected violation."""
    desired = scaler.desired_latency(forecast, report)
    target = desired if cfg.objective_target == "desired" else forecast.median
    fit = krr.fit_per_feature(importance, desired, cfg.grid, feature_names=features)
    write_json(
        {
            "models": [json.loads(m.to_json()) for m in fit.models],
            "cv_mse": fit.cv_mse,
            "pooled_rmse": fit.pooled_rmse,
            "pooled_r2": fit.pooled_r2,
        },
        out_dir / "krr_models.json",
    )
    with open(out_dir / "krr_cv.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "alpha", "beta", "cv_mse"])
        for name, search in zip(features, fit.searches):
            for i, alpha in enumerate(search.alpha_grid):
                for j, beta in enumerate(search.beta_grid):
                    writer.writerow([name, repr(alpha), repr(beta), repr(float(search.table[i, j]))])

    intercept_box, factor_boxes = _theta_boxes(cfg, features)
    theta, result = scaler.solve_theta(
        fit.models, importance, target,
        factor_bounds=factor_boxes, intercept_bounds=intercept_box,
    )
    catalog, resource_bounds = _build_catalog(features, dataset, scenario)
    plan = scaler.make_plan(
        theta, catalog, resource_bounds,
        trace=cfg.trace,
        sla_ms=sla_ms,
        violation_fraction=report.violation_fraction,
        converged=result.converged,
        objective_value=result.objective_value,
    )
    return plan, fit, result


def _noop_plan(cfg: RunConfig, sla_ms: float) -> scaler.ScalingPlan:
    return scaler.ScalingPlan(
        trace=cfg.trace,
        sla_ms=sla_ms,
        violation_fraction=0.0,
        theta=[],
        converged=True,
        objective_value=0.0,
        actions=[],
        advisories=[],
    )


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(cfg: RunConfig) -> int:
    if not cfg.scenario:
        raise UsageError("--scenario is required")
    if cfg.duration is not None and cfg.duration < 1:
        raise UsageError("--duration must be >= 1")
    scenario = resolve_scenario(cfg.scenario)
    if cfg.duration is not None:
        scenario.duration_steps = cfg.duration
    if cfg.seed is not None:
        scenario.seed = cfg.seed
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with _stage("simulate"):
        dataset = scenario.run()
        save_dataset(dataset, out / "dataset.csv")
        write_json(scenario_to_dict(scenario), out / "scenario_echo.json")
    _say(cfg, f"wrote {out / 'dataset.csv'} ({dataset.n_steps} steps)")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    dataset = _load_dataset_or_fail(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with _stage("train"):
        _, report, _ = _train_model(cfg, dataset, out)
    _say(cfg, f"stopped at epoch {report.stopped_epoch}, best {report.best_epoch}")
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    if not cfg.checkpoint:
        raise UsageError("--checkpoint is required")
    if not Path(cfg.checkpoint).exists():
        raise UsageError(f"checkpoint not found: {cfg.checkpoint}")
    dataset = _load_dataset_or_fail(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with _stage("predict"):
        model = tft.load_checkpoint(cfg.checkpoint)
        windows = _model_windows(cfg, model, dataset)
        forecast = tft.predict(model, _pick_window(cfg, windows))
        write_forecast_csv(forecast, out / "forecast.csv")
    _say(cfg, f"wrote {out / 'forecast.csv'}")
    return 0


def cmd_interpret(cfg: RunConfig) -> int:
    if not cfg.checkpoint:
        raise UsageError("--checkpoint is required")
    if not Path(cfg.checkpoint).exists():
        raise UsageError(f"checkpoint not found: {cfg.checkpoint}")
    dataset = _load_dataset_or_fail(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with _stage("interpret"):
        model = tft.load_checkpoint(cfg.checkpoint)
        windows = _model_windows(cfg, model, dataset)
        imp = tft.interpret(model, _pick_window(cfg, windows))
        write_importance_csv(imp.decoder_features, imp.decoder_variable_importance,
                             out / "importance.csv")
        write_importance_csv(imp.encoder_features, imp.encoder_variable_importance,
                             out / "importance_encoder.csv")
        positions = [str(i + 1) for i in range(imp.attention_profile.shape[1])]
        write_importance_csv(positions, imp.attention_profile,
                             out / "attention.csv", column="position")
    _say(cfg, f"wrote {out / 'importance.csv'}")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    if not cfg.checkpoint:
        raise UsageError("--checkpoint is required")
    if not Path(cfg.checkpoint).exists():
        raise UsageError(f"checkpoint not found: {cfg.checkpoint}")
    dataset = _load_dataset_or_fail(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with _stage("evaluate"):
        model = tft.load_checkpoint(cfg.checkpoint)
        windows = _model_windows(cfg, model, dataset)
        _, held_out = tft.split_windows(windows, model.config.validation_fraction)
        metrics = {
            "model": tft.pooled_forecast_metrics(model, held_out),
            "persistence": tft.persistence_metrics(held_out),
            "band_coverage": tft.band_coverage(model, held_out),
            "n_windows": len(held_out),
        }
        write_json(metrics, out / "metrics.json")
    _say(cfg, f"wrote {out / 'metrics.json'}")
    return 0


def cmd_plan(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    forecast_path = out / "forecast.csv"
    importance_path = out / "importance.csv"
    for required in (forecast_path, importance_path):
        if not required.exists():
            raise UsageError(f"missing input {required}; run predict/interpret first")
    if cfg.sla_ms is None:
        raise UsageError("--sla-ms is required")
    dataset = _load_dataset_or_fail(cfg)
    scenario = resolve_scenario(cfg.scenario) if cfg.scenario else None
    with _stage("plan"):
        forecast = read_forecast_csv(forecast_path)
        features, importance = read_importance_csv(importance_path)
        report = scaler.detect_violation(forecast, scaler.SlaSpec(cfg.sla_ms))
        if not report.violated:
            plan = _noop_plan(cfg, cfg.sla_ms)
        else:
            plan, _, _ = _solve_plan(cfg, forecast, report, features, importance,
                                     dataset, scenario, out, cfg.sla_ms)
        (out / "plan.json").write_text(plan.to_json() + "\n")
    _say(cfg, f"wrote {out / 'plan.json'} (violated={report.violated})")
    return 0


def cmd_e2e(cfg: RunConfig) -> int:
    if not cfg.scenario:
        raise UsageError("--scenario is required")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    with _stage("scenario"):
        scenario = resolve_scenario(cfg.scenario)
        if cfg.seed is not None:
            scenario.seed = cfg.seed
    with _stage("simulate"):
        dataset = scenario.run()
        save_dataset(dataset, out / "dataset.csv")
        write_json(scenario_to_dict(scenario), out / "scenario_echo.json")
        cfg.dataset = str(out / "dataset.csv")
    with _stage("sla"):
        steady = dataset.target(cfg.trace).values[-cfg.steady_window :]
        before_p95 = p95(steady)
        sla_ms = cfg.sla_ms if cfg.sla_ms is not None else cfg.sla_factor * before_p95
    _say(cfg, f"steady-state p95 {before_p95:.1f} ms, SLA {sla_ms:.1f} ms")

    with _stage("train"):
        model, train_report, windows = _train_model(cfg, dataset, out)
    with _stage("predict"):
        window = windows[-1]
        forecast = tft.predict(model, window)
        write_forecast_csv(forecast, out / "forecast.csv")
        _, held_out = tft.split_windows(windows, model.config.validation_fraction)
        tft_metrics = {
            "model": tft.pooled_forecast_metrics(model, held_out),
            "persistence": tft.persistence_metrics(held_out),
            "band_coverage": tft.band_coverage(model, held_out),
        }
    with _stage("violation"):
        violation = scaler.detect_violation(forecast, scaler.SlaSpec(sla_ms))
    _say(cfg, f"violation fraction {violation.violation_fraction:.3f}")

    krr_metrics = None
    if not violation.violated:
        plan = _noop_plan(cfg, sla_ms)
        (out / "plan.json").write_text(plan.to_json() + "\n")
        shutil.copyfile(out / "dataset.csv", out / "dataset_after.csv")
        after_p95 = before_p95
    else:
        with _stage("interpret"):
            imp = tft.interpret(model, window)
            features = list(imp.decoder_features)
            write_importance_csv(features, imp.decoder_variable_importance,
                                 out / "importance.csv")
        with _stage("krr"):
            plan, fit, result = _solve_plan(
                cfg, forecast, violation, features,
                imp.decoder_variable_importance, dataset, scenario, out, sla_ms,
            )
            krr_metrics = {
                "cv_mse": fit.cv_mse,
                "pooled_rmse": fit.pooled_rmse,
                "pooled_r2": fit.pooled_r2,
            }
        with _stage("plan"):
            (out / "plan.json").write_text(plan.to_json() + "\n")
        with _stage("resimulate"):
            rescaled = apply_plan(scenario.configs, plan)
            after = replace(scenario, configs=rescaled).run()
            save_dataset(after, out / "dataset_after.csv")
            after_p95 = p95(after.target(cfg.trace).values[-cfg.steady_window :])

    with _stage("summarize"):
        summary = {
            "trace": cfg.trace,
            "sla_ms": sla_ms,
            "violated": violation.violated,
            "violation_fraction": violation.violation_fraction,
            "before_p95_ms": before_p95,
            "after_p95_ms": after_p95,
            "sla_met_within_5pct": bool(after_p95 <= 1.05 * sla_ms),
            "plan_converged": plan.converged,
            "theta": plan.theta,
            "actions": [
                {"service": a.service, "resource": a.resource, "current": a.current,
                 "factor": a.factor, "recommended": a.recommended}
                for a in plan.actions
            ],
            "tft": tft_metrics,
            "krr": krr_metrics,
            "train": {"stopped_epoch": train_report.stopped_epoch,
                      "best_epoch": train_report.best_epoch},
        }
        write_json(summary, out / "summary.json")
    _say(cfg, f"before {before_p95:.1f} ms -> after {after_p95:.1f} ms (SLA {sla_ms:.1f} ms)")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latscale",
        description="Interpretable latency forecasting and autoscaling toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out", default=None, help="output directory (default '.')")
        p.add_argument("--trace", help="target trace color")
        p.add_argument("--resources", choices=["horizontal", "vertical", "both"],
                       help="which resource series feed the model")
        p.add_argument("--sla-ms", type=float, dest="sla_ms", help="SLA bound on p95 latency")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    p = sub.add_parser("simulate", help="run a scenario and write its dataset")
    common(p)
    p.add_argument("--scenario", help="scenario file or bundled name")
    p.add_argument("--duration", type=int, help="override scenario duration")

    p = sub.add_parser("train", help="fit the forecaster on a dataset")
    common(p)
    p.add_argument("--dataset", help="input dataset CSV")
    p.add_argument("--epochs", type=int, help="override max epochs")

    for name, desc in (("predict", "forecast one window"),
                       ("interpret", "export importance weights"),
                       ("evaluate", "score held-out windows")):
        p = sub.add_parser(name, help=desc)
        common(p)
        p.add_argument("--dataset", help="input dataset CSV")
        p.add_argument("--checkpoint", help="model checkpoint JSON")
        p.add_argument("--window-start", type=int, dest="window_start",
                       help="window start step (default: last window)")

    p = sub.add_parser("plan", help="turn forecast + importance into a scaling plan")
    common(p)
    p.add_argument("--dataset", help="dataset CSV for current resource values")
    p.add_argument("--scenario", help="scenario for resource bounds (optional)")

    p = sub.add_parser("e2e", help="full loop: simulate, train, plan, re-simulate")
    common(p)
    p.add_argument("--scenario", help="scenario file or bundled name")
    p.add_argument("--sla-factor", type=float, dest="sla_factor",
                   help="SLA = factor * steady-state p95 (when --sla-ms absent)")
    p.add_argument("--restarts", type=int, help="training restarts raced by validation loss")
    return parser


def apply_cli_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    simple = ("scenario", "dataset", "checkpoint", "trace", "resources", "seed",
              "duration", "sla_ms", "sla_factor", "window_start", "restarts")
    for name in simple:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "out", None) is not None:
        cfg.out = args.out
    if getattr(args, "quiet", False):
        cfg.quiet = True
    if getattr(args, "epochs", None) is not None:
        cfg.tft = replace(cfg.tft, max_epochs=args.epochs)
    if cfg.resources not in ("horizontal", "vertical", "both"):
        raise UsageError(f"unknown resource mode {cfg.resources!r}")
    return cfg


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "predict": cmd_predict,
    "interpret": cmd_interpret,
    "evaluate": cmd_evaluate,
    "plan": cmd_plan,
    "e2e": cmd_e2e,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config)
        cfg = apply_cli_overrides(cfg, args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
