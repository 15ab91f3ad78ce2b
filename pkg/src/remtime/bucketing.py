"""Prefix bucketing: single, prefix-length, k-means cluster and transition-system state buckets."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .eventlog import LabeledPrefix

logger = logging.getLogger(__name__)

SINGLE = "single"
PREFIX_LENGTH = "prefix_length"
CLUSTER = "cluster"
STATE = "state"
BUCKETINGS = (SINGLE, PREFIX_LENGTH, CLUSTER, STATE)

ABSTRACTIONS = ("set", "bag", "sequence")
FALLBACK = -1


def state_key(activities: Sequence[str], abstraction: str = "sequence", horizon: int | None = None) -> str:
    """Canonical key of an activity sequence under a set/bag/sequence abstraction.

    Only the last ``horizon`` activities are considered (all when None).
    """
    if horizon is not None:
        activities = activities[-horizon:] if horizon > 0 else ()
    if abstraction == "set":
        return "|".join(sorted(set(activities)))
    if abstraction == "bag":
        counts = Counter(activities)
        return "|".join(f"{a}:{counts[a]}" for a in sorted(counts))
    if abstraction == "sequence":
        return "→".join(activities)
    raise ValueError(f"unknown abstraction {abstraction!r}")


@dataclass
class Bucketer:
    kind: str
    # prefix_length: sorted trained lengths
    lengths: list[int] = field(default_factory=list)
    # cluster
    activity_vocab: list[str] = field(default_factory=list)
    scaler_mean: list[float] = field(default_factory=list)
    scaler_std: list[float] = field(default_factory=list)
    centroids: list[list[float]] = field(default_factory=list)
    # state
    abstraction: str = "sequence"
    horizon: int | None = None
    min_bucket_size: int = 30
    state_table: dict[str, int] = field(default_factory=dict)

    def bucket_ids(self) -> list[int]:
        if self.kind == SINGLE:
            return [0]
        if self.kind == PREFIX_LENGTH:
            return list(self.lengths)
        if self.kind == CLUSTER:
            return list(range(len(self.centroids)))
        return sorted(set(self.state_table.values())) + [FALLBACK]

    @property
    def fallback_bucket(self) -> int | None:
        return FALLBACK if self.kind == STATE else None

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == PREFIX_LENGTH:
            d["lengths"] = self.lengths
        elif self.kind == CLUSTER:
            d.update(activity_vocab=self.activity_vocab, scaler_mean=self.scaler_mean,
                     scaler_std=self.scaler_std, centroids=self.centroids)
        elif self.kind == STATE:
            d.update(abstraction=self.abstraction, horizon=self.horizon,
                     min_bucket_size=self.min_bucket_size, state_table=self.state_table,
                     fallback_bucket=FALLBACK)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Bucketer":
        d = dict(d)
        d.pop("fallback_bucket", None)
        return cls(**d)


# ---------------------------------------------------------------------------
# k-means

def activity_counts(prefixes: Sequence[LabeledPrefix], vocab: Sequence[str]) -> np.ndarray:
    lookup = {a: i for i, a in enumerate(vocab)}
    X = np.zeros((len(prefixes), len(vocab)))
    for r, p in enumerate(prefixes):
        for e in p.events:
            i = lookup.get(e.activity)
            if i is not None:
                X[r, i] += 1.0
    return X


def nearest(X: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of and squared distance to the nearest centroid; ties go to the lowest index."""
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    idx = np.argmin(d2, axis=1)
    return idx, d2[np.arange(len(X)), idx]


def kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centroids = [X[rng.integers(len(X))]]
    for _ in range(1, k):
        _, d2 = nearest(X, np.array(centroids))
        total = d2.sum()
        if total <= 0:
            break
        centroids.append(X[rng.choice(len(X), p=d2 / total)])
    return np.array(centroids)


def kmeans(X: np.ndarray, k: int, seed: int, max_iter: int = 100, tol: float = 1e-4,
           history: list | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding. Returns (centroids, labels).

    ``k`` is reduced to the number of distinct points when it exceeds it.
    If ``history`` is given, the within-cluster SSE after each iteration is appended.
    """
    n_distinct = len(np.unique(X, axis=0))
    if k > n_distinct:
        logger.warning("k=%d exceeds %d distinct points; reducing k", k, n_distinct)
        k = n_distinct
    rng = np.random.default_rng(seed)
    centroids = kmeans_pp_init(X, k, rng)
    labels, d2 = nearest(X, centroids)
    for _ in range(max_iter):
        new = centroids.copy()
        for j in range(len(centroids)):
            members = labels == j
            if members.any():
                new[j] = X[members].mean(axis=0)
        for j in range(len(centroids)):
            if not (labels == j).any():
                # reseed to the point farthest from its own centroid
                far = int(np.argmax(d2))
                new[j] = X[far]
                d2[far] = 0.0
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        labels, d2 = nearest(X, centroids)
        if history is not None:
            history.append(float(d2.sum()))
        if shift <= tol:
            break
    return centroids, labels


# ---------------------------------------------------------------------------
# fit / assign

def fit_bucketer(prefixes: Sequence[LabeledPrefix], kind: str, options: Mapping | None = None,
                 seed: int = 0) -> Bucketer:
    """Train a bucketer.

    options: ``n_clusters`` (cluster); ``abstraction``, ``horizon``,
    ``min_bucket_size`` (state).
    """
    options = dict(options or {})
    if not prefixes:
        raise ValueError("cannot fit a bucketer on an empty prefix list")
    if kind == SINGLE:
        return Bucketer(SINGLE)
    if kind == PREFIX_LENGTH:
        return Bucketer(PREFIX_LENGTH, lengths=sorted({p.k for p in prefixes}))
    if kind == CLUSTER:
        k = int(options.get("n_clusters", 2))
        if k < 1:
            raise ValueError("n_clusters must be >= 1")
        vocab = sorted({e.activity for p in prefixes for e in p.events})
        X = activity_counts(prefixes, vocab)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        centroids, _ = kmeans((X - mean) / std, k, seed)
        return Bucketer(CLUSTER, activity_vocab=vocab, scaler_mean=mean.tolist(),
                        scaler_std=std.tolist(), centroids=centroids.tolist())
    if kind == STATE:
        abstraction = options.get("abstraction", "sequence")
        horizon = options.get("horizon")
        min_size = int(options.get("min_bucket_size", 30))
        counts = Counter(state_key(p.activities, abstraction, horizon) for p in prefixes)
        supported = sorted(s for s, c in counts.items() if c >= min_size)
        return Bucketer(STATE, abstraction=abstraction, horizon=horizon, min_bucket_size=min_size,
                        state_table={s: i for i, s in enumerate(supported)})
    raise ValueError(f"unknown bucketing {kind!r}")


def assign_bucket(bucketer: Bucketer, prefix: LabeledPrefix) -> int:
    return int(assign_buckets(bucketer, [prefix])[0])


def assign_buckets(bucketer: Bucketer, prefixes: Sequence[LabeledPrefix]) -> np.ndarray:
    kind = bucketer.kind
    if kind == SINGLE:
        return np.zeros(len(prefixes), dtype=int)
    if kind == PREFIX_LENGTH:
        trained = bucketer.lengths
        top = trained[-1]
        known = set(trained)
        out = []
        for p in prefixes:
            if p.k > top:
                out.append(top)
            elif p.k in known:
                out.append(p.k)
            else:
                # lengths below the trained range: nearest trained length above
                out.append(min(t for t in trained if t > p.k))
        return np.array(out, dtype=int)
    if kind == CLUSTER:
        if not prefixes:
            return np.zeros(0, dtype=int)
        X = activity_counts(prefixes, bucketer.activity_vocab)
        Z = (X - np.array(bucketer.scaler_mean)) / np.array(bucketer.scaler_std)
        idx, _ = nearest(Z, np.array(bucketer.centroids))
        return idx.astype(int)
    if kind == STATE:
        table = bucketer.state_table
        return np.array([table.get(state_key(p.activities, bucketer.abstraction, bucketer.horizon), FALLBACK)
                         for p in prefixes], dtype=int)
    raise ValueError(f"unknown bucketing {kind!r}")
