"""Evaluation protocol: temporal split, cross-validated grid search, MAE curves, rankings, Friedman test."""

from __future__ import annotations

import itertools
import logging
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import chi2, rankdata

from .eventlog import AttributeSchema, EventLog, LabeledPrefix
from .predict.bundle import (
    BUCKET_PARAMS,
    ENCODING_PARAMS,
    GBT,
    MethodDescriptor,
    ModelBundle,
    fit_method,
    fit_prepared,
    predict_encoded,
    predict_many,
    prepare_buckets,
)

logger = logging.getLogger(__name__)


class MethodTimeout(RuntimeError):
    pass


class Deadline:
    """Cooperative time budget, checked between model fits."""

    def __init__(self, seconds: float | None):
        self.seconds = seconds
        self.expires = None if seconds is None else time.monotonic() + seconds

    def check(self) -> None:
        if self.expires is not None and time.monotonic() > self.expires:
            raise MethodTimeout(f"time budget of {self.seconds} s exceeded")


NO_DEADLINE = Deadline(None)


# ---------------------------------------------------------------------------
# split

@dataclass(frozen=True)
class SplitSpec:
    train_ratio: float
    train_case_ids: tuple[str, ...]
    test_case_ids: tuple[str, ...]
    split_instant: object | None  # start of the first test case


def temporal_split(log: EventLog, ratio: float = 0.8) -> SplitSpec:
    """Oldest ceil(ratio * K) cases (by start time, then case id) train; the rest test."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    if not log.traces:
        raise ValueError("no cases")
    ordered = sorted(log.traces, key=lambda t: (t.start, t.case_id))
    n_train = math.ceil(ratio * len(ordered))
    train, test = ordered[:n_train], ordered[n_train:]
    if not test:
        logger.warning("temporal split left the test set empty (%d case(s))", len(ordered))
    return SplitSpec(ratio, tuple(t.case_id for t in train), tuple(t.case_id for t in test),
                     test[0].start if test else None)


# ---------------------------------------------------------------------------
# metrics

def mae(predictions, actuals) -> float:
    p = np.asarray(predictions, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if p.shape != a.shape:
        raise ValueError("predictions and actuals differ in length")
    if p.size == 0:
        raise ValueError("mae of an empty sample")
    return float(np.mean(np.abs(a - p)))


@dataclass(frozen=True)
class CurvePoint:
    k: int
    n_prefixes: int
    mae_seconds: float


def curve_from_predictions(prefixes: Sequence[LabeledPrefix], predictions, max_prefix: int = 20) -> list[CurvePoint]:
    by_k = defaultdict(list)
    for p, yhat in zip(prefixes, predictions):
        if p.k <= max_prefix:
            by_k[p.k].append((p.remaining_seconds, yhat))
    return [CurvePoint(k, len(v), mae([b for _, b in v], [a for a, _ in v])) for k, v in sorted(by_k.items())]


def earliness_curve(bundle: ModelBundle, test_prefixes: Sequence[LabeledPrefix], max_prefix: int = 20) -> list[CurvePoint]:
    """MAE over test prefixes of exactly length k, for each k with at least one prefix."""
    kept = [p for p in test_prefixes if p.k <= max_prefix]
    return curve_from_predictions(kept, predict_many(bundle, kept), max_prefix)


@dataclass(frozen=True)
class WeightedSummary:
    weighted_mae: float
    weighted_mae_std: float
    normalized_mae: float
    n_prefixes: int


def weighted_summary(curve: Sequence[CurvePoint], mean_case_duration: float) -> WeightedSummary:
    """Prefix-count weighted mean and population std of the per-length MAEs.

    ``mean_case_duration`` is in the same unit as the MAEs (seconds).
    """
    if not curve:
        raise ValueError("empty curve")
    n = np.array([c.n_prefixes for c in curve], dtype=float)
    m = np.array([c.mae_seconds for c in curve])
    w = n / n.sum()
    wmae = float(np.dot(w, m))
    std = float(np.sqrt(np.dot(w, (m - wmae) ** 2)))
    norm = wmae / mean_case_duration if mean_case_duration > 0 else math.nan
    return WeightedSummary(wmae, std, norm, int(n.sum()))


# ---------------------------------------------------------------------------
# grid search

def expand_grid(grid: Mapping[str, Sequence]) -> list[dict]:
    """Cartesian product in key order, last key varying fastest."""
    if not grid:
        return [{}]
    keys = list(grid)
    for k in keys:
        if not list(grid[k]):
            raise ValueError(f"grid dimension {k!r} is empty")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(list(grid[k]) for k in keys))]


def case_folds(prefixes: Sequence[LabeledPrefix], folds: int, seed: int) -> list[set[str]]:
    """Partition the distinct case ids into ``folds`` validation sets."""
    ids = np.array(sorted({p.case_id for p in prefixes}), dtype=object)
    perm = np.random.default_rng(seed).permutation(len(ids))
    return [set(part) for part in np.array_split(ids[perm], folds)]


@dataclass
class GridResult:
    best: dict
    scores: list[tuple[dict, float]]


def grid_search(train_prefixes: Sequence[LabeledPrefix], descriptor: MethodDescriptor,
                grid: Mapping[str, Sequence], folds: int = 5, seed: int = 0, *,
                attributes: AttributeSchema = AttributeSchema(), max_prefix: int = 20,
                deadline: Deadline = NO_DEADLINE) -> GridResult:
    """Pick the grid point with the lowest mean validation MAE under case-level k-fold CV.

    Ties go to the earliest point in enumeration order.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    points = expand_grid(grid)
    if len(points) == 1:
        return GridResult(points[0], [(points[0], math.nan)])

    fold_mae: dict[int, list[float]] = defaultdict(list)
    for f, val_ids in enumerate(case_folds(train_prefixes, folds, seed)):
        fit_part = [p for p in train_prefixes if p.case_id not in val_ids]
        val_part = [p for p in train_prefixes if p.case_id in val_ids]
        if not val_part or not fit_part:
            logger.warning("fold %d has no %s prefixes; skipped", f, "validation" if not val_part else "training")
            continue
        actual = np.array([p.remaining_seconds for p in val_part])
        if descriptor.predictor == GBT:
            # bucketers and encodings depend only on these keys: share them across regressor settings
            prep_keys = BUCKET_PARAMS + ENCODING_PARAMS
            groups: dict[tuple, list[int]] = defaultdict(list)
            for i, pt in enumerate(points):
                groups[tuple(sorted((k, repr(v)) for k, v in pt.items() if k in prep_keys))].append(i)
            for idxs in groups.values():
                deadline.check()
                prepared = prepare_buckets(fit_part, descriptor, points[idxs[0]], seed, attributes, max_prefix)
                batch = prepared.encode_queries(val_part)
                for i in idxs:
                    deadline.check()
                    bundle = fit_prepared(prepared, points[i], seed)
                    fold_mae[i].append(mae(predict_encoded(bundle, batch), actual))
        else:
            for i, pt in enumerate(points):
                deadline.check()
                bundle = fit_method(fit_part, descriptor, pt, seed, attributes=attributes, max_prefix=max_prefix)
                fold_mae[i].append(mae(predict_many(bundle, val_part), actual))

    scores = [(pt, float(np.mean(fold_mae[i])) if fold_mae[i] else math.inf) for i, pt in enumerate(points)]
    best_i = min(range(len(points)), key=lambda i: (scores[i][1], i))
    return GridResult(points[best_i], scores)


# ---------------------------------------------------------------------------
# one method end to end

@dataclass
class MethodResult:
    descriptor: MethodDescriptor
    hyperparams: dict
    curve: list[CurvePoint]
    bundle: ModelBundle | None
    train_seconds: float = 0.0
    predict_seconds: float = 0.0
    timed_out: bool = False
    grid_scores: list = field(default_factory=list)


def evaluate_method(train_prefixes: Sequence[LabeledPrefix], test_prefixes: Sequence[LabeledPrefix],
                    descriptor: MethodDescriptor, grid: Mapping[str, Sequence], *, folds: int = 5,
                    seed: int = 0, attributes: AttributeSchema = AttributeSchema(), max_prefix: int = 20,
                    timeout: float | None = None, metadata: Mapping | None = None) -> MethodResult:
    """Grid search and final fit on the training prefixes, then the earliness curve on the test prefixes.

    ``test_prefixes`` is not touched until every fit has finished.
    """
    deadline = Deadline(timeout)
    t0 = time.perf_counter()
    try:
        gs = grid_search(train_prefixes, descriptor, grid, folds, seed, attributes=attributes,
                         max_prefix=max_prefix, deadline=deadline)
        deadline.check()
        bundle = fit_method(train_prefixes, descriptor, gs.best, seed, attributes=attributes,
                            max_prefix=max_prefix, metadata=metadata)
        deadline.check()
    except MethodTimeout:
        logger.warning("%s: timed out after %.1f s", descriptor.name, time.perf_counter() - t0)
        return MethodResult(descriptor, {}, [], None, time.perf_counter() - t0, 0.0, True)
    t1 = time.perf_counter()
    curve = earliness_curve(bundle, test_prefixes, max_prefix)
    t2 = time.perf_counter()
    return MethodResult(descriptor, gs.best, curve, bundle, t1 - t0, t2 - t1, False, gs.scores)


# ---------------------------------------------------------------------------
# ranking and Friedman test

@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    df: int
    p_value: float
    n_datasets: int
    n_methods: int


def friedman_test(rank_matrix) -> FriedmanResult:
    """Friedman chi-square from an N datasets x M methods matrix of within-dataset ranks."""
    R = np.asarray(rank_matrix, dtype=float)
    if R.ndim != 2 or R.size == 0 or not np.all(np.isfinite(R)):
        raise ValueError("rank matrix must be a complete 2-D array")
    n, m = R.shape
    if m < 3:
        raise ValueError("the Friedman test needs at least 3 methods")
    mean_ranks = R.mean(axis=0)
    stat = 12.0 * n / (m * (m + 1)) * (np.sum(mean_ranks ** 2) - m * (m + 1) ** 2 / 4.0)
    stat = 0.0 if abs(stat) < 1e-12 else float(stat)
    return FriedmanResult(stat, m - 1, float(chi2.sf(stat, m - 1)), n, m)


@dataclass
class RankTable:
    datasets: list[str]
    methods: list[str]
    ranks: dict[str, dict[str, float]]
    mean_rank: dict[str, float]
    excluded: list[str]
    friedman: FriedmanResult | None


def _value(v) -> float:
    try:
        x = float(v)
    except (TypeError, ValueError):
        return math.nan
    return x


def rank_methods(per_dataset: Mapping[str, Mapping[str, float]]) -> RankTable:
    """Rank methods per dataset by ascending weighted MAE.

    Reported ranks give tied methods the lowest rank of their block; the
    Friedman statistic is computed from average ranks. Datasets with any
    missing value are excluded.
    """
    methods = sorted({m for row in per_dataset.values() for m in row})
    complete, excluded = [], []
    for ds in sorted(per_dataset):
        vals = [_value(per_dataset[ds].get(m)) for m in methods]
        (excluded if any(math.isnan(v) for v in vals) else complete).append(ds)
    if excluded:
        logger.warning("datasets excluded from ranking (missing results): %s", excluded)
    ranks, avg_rows = {}, []
    for ds in complete:
        vals = [_value(per_dataset[ds][m]) for m in methods]
        ranks[ds] = dict(zip(methods, rankdata(vals, method="min").tolist()))
        avg_rows.append(rankdata(vals, method="average"))
    mean_rank = {m: float(np.mean([ranks[ds][m] for ds in complete])) if complete else math.nan for m in methods}
    friedman = friedman_test(np.array(avg_rows)) if complete and len(methods) >= 3 else None
    return RankTable(complete, methods, ranks, mean_rank, excluded, friedman)
