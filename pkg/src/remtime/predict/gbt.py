"""Gradient-boosted regression trees with squared-error loss."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tree import RegressionTree, fit_tree

# search space used when no grid is configured
DEFAULT_GRID = {
    "n_estimators": [250, 500],
    "learning_rate": [0.02, 0.04, 0.06],
    "subsample": [0.5, 0.8],
    "colsample_bytree": [0.5, 0.8],
    "max_depth": [3, 6],
}

DEFAULTS = {
    "n_estimators": 250,
    "learning_rate": 0.04,
    "subsample": 0.8,
    "colsample_bytree": 0.8,
    "max_depth": 6,
    "min_leaf": 5,
}


@dataclass
class GbtModel:
    base_prediction: float
    learning_rate: float
    n_estimators: int
    subsample: float
    colsample: float
    max_depth: int | None
    min_leaf: int
    seed: int
    n_features: int
    trees: list[RegressionTree] = field(default_factory=list)

    def raw_predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"row width {X.shape[1]} does not match model width {self.n_features}")
        out = np.full(len(X), self.base_prediction)
        if self.trees:
            out += self.learning_rate * np.sum([t.predict(X) for t in self.trees], axis=0)
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.maximum(self.raw_predict(X), 0.0)

    def to_dict(self) -> dict:
        return {
            "type": "gbt",
            "base_prediction": self.base_prediction,
            "learning_rate": self.learning_rate,
            "n_estimators": self.n_estimators,
            "subsample": self.subsample,
            "colsample": self.colsample,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "seed": self.seed,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GbtModel":
        d = dict(d)
        d.pop("type", None)
        trees = [RegressionTree.from_dict(t) for t in d.pop("trees")]
        return cls(**d, trees=trees)


def fit_gbt(rows, targets, hyperparams: Mapping | None = None, seed: int = 0,
            on_stage: Callable[[int, np.ndarray], None] | None = None) -> GbtModel:
    """Fit a boosted ensemble; each tree is fit to the current residuals.

    Per stage, ``floor(subsample * n)`` rows and ``floor(colsample_bytree * d)``
    columns are drawn without replacement (at least one of each). ``on_stage``
    receives (stage index, current training predictions) after every stage.
    """
    hp = {**DEFAULTS, **(hyperparams or {})}
    X = np.asarray(rows, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("rows must be a non-empty 2-D array aligned with targets")
    n, d = X.shape
    lr = float(hp["learning_rate"])
    colsample = float(hp.get("colsample_bytree", hp.get("colsample", 1.0)))
    model = GbtModel(base_prediction=float(y.mean()), learning_rate=lr,
                     n_estimators=int(hp["n_estimators"]), subsample=float(hp["subsample"]),
                     colsample=colsample, max_depth=hp["max_depth"], min_leaf=int(hp["min_leaf"]),
                     seed=int(seed), n_features=d)
    rng = np.random.default_rng(seed)
    n_rows = max(1, int(np.floor(model.subsample * n)))
    n_cols = max(1, int(np.floor(colsample * d))) if d else 0
    pred = np.full(n, model.base_prediction)
    for stage in range(model.n_estimators):
        rows_idx = np.arange(n) if n_rows >= n else np.sort(rng.choice(n, n_rows, replace=False))
        cols = np.arange(d) if n_cols >= d else np.sort(rng.choice(d, n_cols, replace=False))
        residual = y - pred
        tree = fit_tree(X[rows_idx], residual[rows_idx], model.max_depth, model.min_leaf, cols)
        model.trees.append(tree)
        if lr != 0.0:
            pred = pred + lr * tree.predict(X)
        if on_stage is not None:
            on_stage(stage, pred)
    return model


def predict_gbt(model: GbtModel, row) -> float:
    """Remaining-time prediction for one row, clamped at zero."""
    row = np.asarray(row, dtype=float)
    if row.ndim != 1:
        raise ValueError("predict_gbt expects a single row")
    return float(model.predict(row[None, :])[0])
