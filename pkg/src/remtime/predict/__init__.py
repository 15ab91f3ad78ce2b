"""Remaining-time regressors and model bundles."""

from .bundle import (
    GBT,
    MEAN_BASELINE,
    TRANSITION_SYSTEM,
    MeanBaselineModel,
    MethodDescriptor,
    ModelBundle,
    PreparedBuckets,
    fit_mean_baseline,
    fit_method,
    fit_prepared,
    load_bundle,
    predict,
    predict_encoded,
    predict_many,
    prepare_buckets,
    save_bundle,
)
from .gbt import DEFAULT_GRID, GbtModel, fit_gbt, predict_gbt
from .transition import TransitionSystemModel, fit_transition_system
from .tree import RegressionTree, fit_tree

__all__ = [
    "DEFAULT_GRID", "GBT", "MEAN_BASELINE", "TRANSITION_SYSTEM", "GbtModel", "MeanBaselineModel",
    "MethodDescriptor", "ModelBundle", "PreparedBuckets", "RegressionTree", "TransitionSystemModel",
    "fit_gbt", "fit_mean_baseline", "fit_method", "fit_prepared", "fit_transition_system", "fit_tree",
    "load_bundle", "predict", "predict_encoded", "predict_gbt", "predict_many", "prepare_buckets",
    "save_bundle",
]
