"""RBF kernel ridge regression, one univariate model per importance feature.

Each regressor maps one feature-importance score onto the corrected
latency target.  Hyperparameters come from a small decade grid searched
with chronological 3-fold cross-validation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

DEFAULT_GRID = (0.01, 0.1, 1.0, 10.0)


@dataclass(frozen=True)
class RbfKernel:
    """k(x, x') = exp(-beta * ||x - x'||^2)."""

    beta: float

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("kernel parameter beta must be positive")


def rbf(x, x_other, beta: float) -> float:
    """Evaluate the RBF kernel between two points (scalars or vectors)."""
    a = np.atleast_1d(np.asarray(x, dtype=np.float64))
    b = np.atleast_1d(np.asarray(x_other, dtype=np.float64))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.exp(-beta * np.sum((a - b) ** 2)))


def _kernel_matrix(x: np.ndarray, y: np.ndarray, beta: float) -> np.ndarray:
    d2 = (x[:, None] - y[None, :]) ** 2
    return np.exp(-beta * d2)


@dataclass
class KrrModel:
    """Fitted dual-form ridge regressor over one scalar feature."""

    alpha: float
    kernel: RbfKernel
    support_inputs: np.ndarray
    dual_coefficients: np.ndarray
    target_center: float
    feature: str | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "alpha": self.alpha,
                "beta": self.kernel.beta,
                "center": self.target_center,
                "support_inputs": self.support_inputs.tolist(),
                "dual_coefficients": self.dual_coefficients.tolist(),
                "feature": self.feature,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "KrrModel":
        doc = json.loads(text)
        return cls(
            alpha=doc["alpha"],
            kernel=RbfKernel(doc["beta"]),
            support_inputs=np.asarray(doc["support_inputs"], dtype=np.float64),
            dual_coefficients=np.asarray(doc["dual_coefficients"], dtype=np.float64),
            target_center=doc["center"],
            feature=doc.get("feature"),
        )


def fit(feature_values: Sequence[float], y: Sequence[float], alpha: float, beta: float,
        feature: str | None = None) -> KrrModel:
    """Solve (K + alpha*I) a = y - mean(y) and keep the dual coefficients."""
    x = np.asarray(feature_values, dtype=np.float64)
    t = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or t.shape != x.shape:
        raise ValueError("feature_values and y must be 1-D sequences of equal length")
    if x.size < 1:
        raise ValueError("need at least one training point")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
        raise ValueError("non-finite training inputs")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    center = float(t.mean())
    gram = _kernel_matrix(x, x, beta)
    gram[np.diag_indices_from(gram)] += alpha
    try:
        coefs = cho_solve(cho_factor(gram, lower=True), t - center)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"kernel system not positive definite (alpha={alpha} too small for conditioning)"
        ) from exc
    return KrrModel(
        alpha=float(alpha),
        kernel=RbfKernel(float(beta)),
        support_inputs=x.copy(),
        dual_coefficients=np.asarray(coefs, dtype=np.float64),
        target_center=center,
        feature=feature,
    )


def predict(model: KrrModel, x) -> float | np.ndarray:
    """center + sum_i a_i * k(support_i, x); vectorized over query points."""
    queries = np.atleast_1d(np.asarray(x, dtype=np.float64))
    k = _kernel_matrix(queries, model.support_inputs, model.kernel.beta)
    out = model.target_center + k @ model.dual_coefficients
    return float(out[0]) if np.isscalar(x) or np.ndim(x) == 0 else out


@dataclass(frozen=True)
class GridSearchSpec:
    alpha_grid: tuple[float, ...] = DEFAULT_GRID
    beta_grid: tuple[float, ...] = DEFAULT_GRID
    folds: int = 3

    def __post_init__(self):
        if not self.alpha_grid or not self.beta_grid:
            raise ValueError("grids must be non-empty")
        if min(self.alpha_grid) <= 0 or min(self.beta_grid) <= 0:
            raise ValueError("grid values must be positive")
        if self.folds < 2:
            raise ValueError("need at least two folds")


@dataclass
class GridSearchResult:
    best_alpha: float
    best_beta: float
    table: np.ndarray  # mean CV MSE, rows follow alpha_grid, columns beta_grid
    alpha_grid: tuple[float, ...]
    beta_grid: tuple[float, ...]

    def cell(self, alpha: float, beta: float) -> float:
        return float(self.table[self.alpha_grid.index(alpha), self.beta_grid.index(beta)])


def grid_search(feature_values: Sequence[float], y: Sequence[float],
                spec: GridSearchSpec = GridSearchSpec()) -> GridSearchResult:
    """Exhaustive (alpha, beta) search with contiguous chronological folds.

    Ties are broken toward the larger alpha, then the smaller beta, so
    the smoother model wins.
    """
    x = np.asarray(feature_values, dtype=np.float64)
    t = np.asarray(y, dtype=np.float64)
    if x.size < spec.folds:
        raise ValueError(f"need at least {spec.folds} points for {spec.folds}-fold CV, have {x.size}")
    fold_indices = np.array_split(np.arange(x.size), spec.folds)

    table = np.empty((len(spec.alpha_grid), len(spec.beta_grid)))
    for i, alpha in enumerate(spec.alpha_grid):
        for j, beta in enumerate(spec.beta_grid):
            errs = []
            for val_idx in fold_indices:
                train_mask = np.ones(x.size, dtype=bool)
                train_mask[val_idx] = False
                model = fit(x[train_mask], t[train_mask], alpha, beta)
                pred = predict(model, x[val_idx])
                errs.append(float(np.mean((pred - t[val_idx]) ** 2)))
            table[i, j] = np.mean(errs)

    best = min(
        ((i, j) for i in range(len(spec.alpha_grid)) for j in range(len(spec.beta_grid))),
        key=lambda ij: (table[ij], -spec.alpha_grid[ij[0]], spec.beta_grid[ij[1]]),
    )
    return GridSearchResult(
        best_alpha=spec.alpha_grid[best[0]],
        best_beta=spec.beta_grid[best[1]],
        table=table,
        alpha_grid=tuple(spec.alpha_grid),
        beta_grid=tuple(spec.beta_grid),
    )


@dataclass
class PerFeatureFit:
    models: list[KrrModel]
    searches: list[GridSearchResult]
    cv_mse: list[float]
    pooled_rmse: float
    pooled_r2: float


def fit_per_feature(importances: np.ndarray, desired: Sequence[float],
                    spec: GridSearchSpec = GridSearchSpec(),
                    feature_names: Sequence[str] | None = None) -> PerFeatureFit:
    """Fit one grid-searched regressor per importance column.

    ``importances`` is (steps, features); every column is matched
    against the same corrected-latency target.  The pooled metrics
    score the equal-weight average of all per-feature predictions, as
    a fit diagnostic.
    """
    imp = np.asarray(importances, dtype=np.float64)
    t = np.asarray(desired, dtype=np.float64)
    if imp.ndim != 2 or imp.shape[0] != t.size:
        raise ValueError(f"importance matrix {imp.shape} does not match {t.size} target rows")
    if imp.shape[1] < 1:
        raise ValueError("need at least one feature column")
    if feature_names is not None and len(feature_names) != imp.shape[1]:
        raise ValueError("feature_names length must match importance columns")

    models, searches, cv_mse = [], [], []
    for k in range(imp.shape[1]):
        column = imp[:, k]
        search = grid_search(column, t, spec)
        name = feature_names[k] if feature_names is not None else None
        models.append(fit(column, t, search.best_alpha, search.best_beta, feature=name))
        searches.append(search)
        cv_mse.append(search.cell(search.best_alpha, search.best_beta))

    combo = np.mean([predict(m, imp[:, k]) for k, m in enumerate(models)], axis=0)
    resid = combo - t
    pooled_rmse = float(np.sqrt(np.mean(resid**2)))
    sst = float(np.sum((t - t.mean()) ** 2))
    pooled_r2 = float(1.0 - np.sum(resid**2) / sst) if sst > 0 else float("nan")
    return PerFeatureFit(models, searches, cv_mse, pooled_rmse, pooled_r2)
