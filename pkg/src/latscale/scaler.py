"""SLA violation handling: corrected latency target, box-constrained
least squares over the combined kernel regressors, and scaling plans.

The learned coefficient vector theta weights the per-feature kernel
regressors; components attached to actionable resources are read as
multiplicative scaling factors, bounded by the optimizer boxes.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, asdict
from typing import TYPE_CHECKING, Callable, Mapping, Sequence

import numpy as np

from .krr import KrrModel, predict as krr_predict

if TYPE_CHECKING:
    from .tft import QuantileForecast

ACTIONABLE_RESOURCES = ("pods", "cpu", "mem")
DEFAULT_FACTOR_BOX = (0.25, 4.0)
DEFAULT_INTERCEPT_BOX = (-1e4, 1e4)


@dataclass(frozen=True)
class SlaSpec:
    """Upper bound on the p95 end-to-end latency, in milliseconds."""

    threshold_ms: float

    def __post_init__(self):
        if self.threshold_ms <= 0:
            raise ValueError("SLA threshold must be positive")


@dataclass(frozen=True)
class ViolationReport:
    violated: bool
    violation_fraction: float
    worst_step: int
    predicted_ms: float


def detect_violation(forecast: "QuantileForecast", sla: SlaSpec) -> ViolationReport:
    """Check the median forecast against the SLA bound.

    The violation fraction is the worst relative overshoot
    max(0, (yhat - threshold) / yhat) over the horizon, so subtracting
    it from the prediction lands the worst step on the threshold.
    """
    median = np.asarray(forecast.median, dtype=np.float64)
    if median.size == 0:
        raise ValueError("empty forecast")
    overshoot = np.maximum(0.0, (median - sla.threshold_ms) / median)
    worst = int(np.argmax(overshoot))
    fraction = float(overshoot[worst])
    return ViolationReport(
        violated=fraction > 0.0,
        violation_fraction=fraction,
        worst_step=worst,
        predicted_ms=float(median[worst]),
    )


def desired_latency(forecast: "QuantileForecast", report: ViolationReport) -> np.ndarray:
    """Scale the median forecast down by the violation fraction."""
    median = np.asarray(forecast.median, dtype=np.float64)
    return median * (1.0 - report.violation_fraction)


def combined_predict(theta: Sequence[float], models: Sequence[KrrModel],
                     importance_row: Sequence[float]) -> float:
    """theta_0 + sum_k theta_k * f_k(importance_row[k]); linear in theta."""
    th = np.asarray(theta, dtype=np.float64)
    row = np.asarray(importance_row, dtype=np.float64)
    if th.size != len(models) + 1 or row.size != len(models):
        raise ValueError(
            f"arity mismatch: {th.size} parameters, {len(models)} models, {row.size} scores"
        )
    acc = th[0]
    for k, model in enumerate(models):
        acc += th[k + 1] * krr_predict(model, float(row[k]))
    return float(acc)


def tabulate_model_outputs(models: Sequence[KrrModel], importance_matrix: np.ndarray) -> np.ndarray:
    """F[t, k] = f_k(importance_matrix[t, k])."""
    imp = np.asarray(importance_matrix, dtype=np.float64)
    if imp.ndim != 2 or imp.shape[1] != len(models):
        raise ValueError(f"importance matrix {imp.shape} does not match {len(models)} models")
    return np.column_stack([krr_predict(m, imp[:, k]) for k, m in enumerate(models)])


def objective(theta: Sequence[float], models: Sequence[KrrModel],
              importance_matrix: np.ndarray, target: Sequence[float]) -> float:
    """Sum of squared differences between combined predictions and the target."""
    fun, _ = least_squares_objective(models, importance_matrix, target)
    return fun(np.asarray(theta, dtype=np.float64))[0]


def least_squares_objective(models: Sequence[KrrModel], importance_matrix: np.ndarray,
                            target: Sequence[float]) -> tuple[Callable, np.ndarray]:
    """Build the objective/gradient callable for the theta solve.

    The combined model is linear in theta once the per-feature outputs
    are tabulated, so the gradient is closed-form: 2 G^T (G theta - y)
    with G = [1 | F].
    """
    t = np.asarray(target, dtype=np.float64)
    outputs = tabulate_model_outputs(models, importance_matrix)
    if outputs.shape[0] != t.size:
        raise ValueError(f"{outputs.shape[0]} rows vs {t.size} target values")
    design = np.column_stack([np.ones(t.size), outputs])

    def fun_and_grad(theta: np.ndarray) -> tuple[float, np.ndarray]:
        resid = design @ theta - t
        return float(resid @ resid), 2.0 * (design.T @ resid)

    return fun_and_grad, design


@dataclass
class LbfgsbResult:
    theta: np.ndarray
    objective_value: float
    iterations: int
    converged: bool


def _two_loop_direction(grad: np.ndarray, pairs: deque) -> np.ndarray:
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += s * (a - b)
    return q


def _free_mask(x, g, lo, hi) -> np.ndarray:
    """Variables not pinned at a bound the gradient pushes against."""
    at_lo = (x <= lo + 1e-12 * np.maximum(1.0, np.abs(lo))) & (g > 0)
    at_hi = (x >= hi - 1e-12 * np.maximum(1.0, np.abs(hi))) & (g < 0)
    return ~(at_lo | at_hi)


def lbfgsb_minimize(
    fun_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    theta_init: Sequence[float],
    bounds: Sequence[tuple[float, float]],
    memory: int = 10,
    max_iter: int = 500,
    pg_tol: float = 1e-8,
    armijo_c: float = 1e-4,
    max_halvings: int = 60,
) -> LbfgsbResult:
    """Projected-gradient L-BFGS for box-constrained minimization.

    Quasi-Newton directions come from the two-loop recursion over the
    last ``memory`` curvature pairs (accepted only when s.y > 1e-10),
    restricted to the variables not pinned at an active bound; the
    memory is dropped whenever the active set changes so stale
    curvature cannot drag iterates back into the box walls.  Trial
    points are projected onto the box and accepted under an Armijo
    backtracking test with halving steps.  Converges when the
    projected-gradient infinity norm drops below ``pg_tol``.
    """
    lo = np.asarray([b[0] for b in bounds], dtype=np.float64)
    hi = np.asarray([b[1] for b in bounds], dtype=np.float64)
    if np.any(lo > hi):
        raise ValueError("each bound must satisfy lo <= hi")
    x = np.clip(np.asarray(theta_init, dtype=np.float64), lo, hi)
    f, g = fun_and_grad(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise ValueError("non-finite objective or gradient at the starting point")

    pairs: deque = deque(maxlen=memory)
    prev_free: np.ndarray | None = None
    iterations = 0
    converged = False
    while iterations < max_iter:
        projected_grad = x - np.clip(x - g, lo, hi)
        if np.max(np.abs(projected_grad)) < pg_tol:
            converged = True
            break
        iterations += 1

        free = _free_mask(x, g, lo, hi)
        if prev_free is not None and not np.array_equal(free, prev_free):
            pairs.clear()
        prev_free = free
        masked_grad = np.where(free, g, 0.0)

        def try_direction(d: np.ndarray):
            alpha = 1.0
            for _ in range(max_halvings):
                x_new = np.clip(x + alpha * d, lo, hi)
                step = x_new - x
                if not step.any():
                    return None
                f_new, g_new = fun_and_grad(x_new)
                if np.isfinite(f_new) and f_new <= f + armijo_c * (g @ step):
                    return x_new, f_new, g_new
                alpha *= 0.5
            return None

        direction = -_two_loop_direction(masked_grad, pairs)
        direction[~free] = 0.0
        if direction @ masked_grad > -1e-14 * np.linalg.norm(direction) * np.linalg.norm(masked_grad):
            direction = -masked_grad
            pairs.clear()
        result = try_direction(direction)
        if result is None and pairs:
            pairs.clear()
            result = try_direction(-masked_grad)
        if result is None:
            break  # no admissible decrease left
        x_new, f_new, g_new = result
        s, y = x_new - x, g_new - g
        if s @ y > 1e-10:
            pairs.append((s, y, 1.0 / (s @ y)))
        x, f, g = x_new, f_new, g_new

    return LbfgsbResult(theta=x, objective_value=f, iterations=iterations, converged=converged)


@dataclass
class ThetaVector:
    """Optimized coefficients with the boxes they were solved under."""

    values: np.ndarray
    bounds: list[tuple[float, float]]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.bounds) != self.values.size:
            raise ValueError("one (lo, hi) box per component required")
        for v, (lo, hi) in zip(self.values, self.bounds):
            if not lo - 1e-12 <= v <= hi + 1e-12:
                raise ValueError(f"theta component {v} outside its box [{lo}, {hi}]")

    @property
    def intercept(self) -> float:
        return float(self.values[0])

    @property
    def factors(self) -> np.ndarray:
        return self.values[1:]


def solve_theta(
    models: Sequence[KrrModel],
    importance_matrix: np.ndarray,
    target: Sequence[float],
    factor_bounds: Sequence[tuple[float, float]] | None = None,
    intercept_bounds: tuple[float, float] = DEFAULT_INTERCEPT_BOX,
    theta_init: Sequence[float] | None = None,
) -> tuple[ThetaVector, LbfgsbResult]:
    """Fit theta on the combined-regressor least squares problem.

    Starts from the no-change point (all factors one, intercept at the
    target mean) unless an explicit start is given.
    """
    k = len(models)
    if factor_bounds is None:
        factor_bounds = [DEFAULT_FACTOR_BOX] * k
    bounds = [tuple(intercept_bounds)] + [tuple(b) for b in factor_bounds]
    t = np.asarray(target, dtype=np.float64)
    if theta_init is None:
        theta_init = np.concatenate([[t.mean()], np.ones(k)])
    fun_and_grad, design = least_squares_objective(models, importance_matrix, t)
    # Solve in row-scaled units: theta* is unchanged, but gradients land
    # in a range where the absolute projected-gradient tolerance is
    # attainable in double precision even for millisecond-scale targets.
    scale = float(max(1.0, np.max(np.abs(t)), np.max(np.abs(design))))
    scaled_design = design / scale
    scaled_t = t / scale

    def scaled_fun(theta: np.ndarray) -> tuple[float, np.ndarray]:
        resid = scaled_design @ theta - scaled_t
        return float(resid @ resid), 2.0 * (scaled_design.T @ resid)

    result = lbfgsb_minimize(scaled_fun, theta_init, bounds)
    result.objective_value = fun_and_grad(result.theta)[0]
    return ThetaVector(values=result.theta, bounds=bounds), result


@dataclass(frozen=True)
class FeatureSpec:
    """Catalog entry tying one importance feature to a concrete knob."""

    name: str
    actionable: bool
    microservice: str | None = None
    resource: str | None = None  # pods | cpu | mem for actionable features
    current: float = 0.0


@dataclass(frozen=True)
class PlanAction:
    service: str
    resource: str
    current: float
    factor: float
    recommended: float


@dataclass(frozen=True)
class Advisory:
    feature: str
    factor: float
    note: str


@dataclass
class ScalingPlan:
    trace: str
    sla_ms: float
    violation_fraction: float
    theta: list[float]
    converged: bool
    objective_value: float
    actions: list[PlanAction]
    advisories: list[Advisory]

    def to_json(self) -> str:
        doc = {
            "trace": self.trace,
            "sla_ms": self.sla_ms,
            "violation_fraction": self.violation_fraction,
            "theta": list(self.theta),
            "converged": self.converged,
            "objective_value": self.objective_value,
            "actions": [asdict(a) for a in self.actions],
            "advisories": [asdict(a) for a in self.advisories],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ScalingPlan":
        doc = json.loads(text)
        return cls(
            trace=doc["trace"],
            sla_ms=doc["sla_ms"],
            violation_fraction=doc["violation_fraction"],
            theta=list(doc["theta"]),
            converged=doc["converged"],
            objective_value=doc["objective_value"],
            actions=[PlanAction(**a) for a in doc["actions"]],
            advisories=[Advisory(**a) for a in doc["advisories"]],
        )


def make_plan(
    theta: ThetaVector,
    feature_catalog: Sequence[FeatureSpec],
    resource_bounds: Mapping[str, tuple[float, float]] | None = None,
    trace: str = "",
    sla_ms: float = 0.0,
    violation_fraction: float = 0.0,
    converged: bool = True,
    objective_value: float = 0.0,
) -> ScalingPlan:
    """Turn optimized coefficients into per-resource recommendations.

    Actionable features get factor = theta_k applied multiplicatively
    to their current value, clamped to the resource bounds (looked up
    by feature name, falling back to the resource kind).  Calls-per-
    second features become advisory notes only.
    """
    factors = theta.factors
    if len(feature_catalog) != factors.size:
        raise ValueError(
            f"catalog covers {len(feature_catalog)} features, theta has {factors.size}"
        )
    resource_bounds = dict(resource_bounds or {})
    actions, advisories = [], []
    for spec, factor in zip(feature_catalog, factors):
        factor = float(factor)
        if spec.actionable:
            if spec.resource not in ACTIONABLE_RESOURCES:
                raise ValueError(f"feature {spec.name!r}: unknown resource {spec.resource!r}")
            lo, hi = resource_bounds.get(
                spec.name, resource_bounds.get(spec.resource, (1.0, 16.0) if spec.resource == "pods" else (0.0, np.inf))
            )
            raw = factor * spec.current
            recommended = float(np.clip(round(raw) if spec.resource == "pods" else raw, lo, hi))
            actions.append(
                PlanAction(
                    service=spec.microservice or "",
                    resource=spec.resource,
                    current=spec.current,
                    factor=factor,
                    recommended=recommended,
                )
            )
        else:
            verb = "reduce" if factor < 1.0 else "shape"
            advisories.append(
                Advisory(
                    feature=spec.name,
                    factor=factor,
                    note=f"{verb} front-end calls for {spec.name} by factor {factor:.3f} (not enforced)",
                )
            )
    return ScalingPlan(
        trace=trace,
        sla_ms=sla_ms,
        violation_fraction=violation_fraction,
        theta=[float(v) for v in theta.values],
        converged=converged,
        objective_value=objective_value,
        actions=actions,
        advisories=advisories,
    )
