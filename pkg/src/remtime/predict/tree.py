"""Exact-greedy least-squares regression trees stored as flat node arrays.

The split search is compiled with numba: boosting grows hundreds of small
trees per model and per-node interpreter overhead would dominate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

LEAF = -1
UNLIMITED = -1  # max_depth sentinel inside the kernel
# gains at rounding level (relative to the node's squared error) do not count as improvement
REL_GAIN_TOL = 1e-12


@dataclass
class RegressionTree:
    # node i is a leaf iff feature[i] == LEAF; left/right index into the same arrays
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int | None = None
    min_leaf: int = 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature == LEAF).sum())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of X."""
        return _apply(np.ascontiguousarray(X, dtype=np.float64), self.feature, self.threshold,
                      self.left, self.right)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(np.atleast_2d(np.asarray(X, dtype=float)))]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
        }

    @classmethod
    def from_dict(cls, d) -> "RegressionTree":
        return cls(np.array(d["feature"], dtype=np.int64), np.array(d["threshold"], dtype=np.float64),
                   np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["value"], dtype=np.float64), d.get("max_depth"), d.get("min_leaf", 1))


@numba.njit(cache=True)
def _apply(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for r in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out


@numba.njit(cache=True)
def _best_split(X, y, idx, columns, min_leaf):
    """Best (gain, column, threshold) for the rows ``idx``; column -1 when none is admissible.

    Left child takes rows with x <= threshold. Ties go to the lower column,
    then the lower threshold.
    """
    n = idx.shape[0]
    best_gain = -np.inf
    best_col = -1
    best_thr = 0.0
    if n < 2 * min_leaf:
        return best_gain, best_col, best_thr
    total = 0.0
    for i in range(n):
        total += y[idx[i]]
    xs = np.empty(n)
    ys = np.empty(n)
    for c in columns:
        for i in range(n):
            xs[i] = X[idx[i], c]
        order = np.argsort(xs, kind="mergesort")
        sx = xs[order]
        for i in range(n):
            ys[i] = y[idx[order[i]]]
        left_sum = 0.0
        for i in range(n - min_leaf):
            left_sum += ys[i]
            nl = i + 1
            if nl < min_leaf or not sx[i] < sx[i + 1]:
                continue
            nr = n - nl
            diff = left_sum / nl - (total - left_sum) / nr
            gain = nl * nr / n * diff * diff
            if gain > best_gain:
                best_gain = gain
                best_col = c
                thr = (sx[i] + sx[i + 1]) / 2.0
                if not (sx[i] <= thr < sx[i + 1]):
                    thr = sx[i]
                best_thr = thr
    return best_gain, best_col, best_thr


@numba.njit(cache=True)
def _grow(X, y, columns, max_depth, min_leaf):
    n = y.shape[0]
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap)
    # rows of node k live in rows[start[k]:stop[k]]
    rows = np.arange(n)
    start = np.zeros(cap, dtype=np.int64)
    stop = np.zeros(cap, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)

    value[0] = y.mean()
    stop[0] = n
    n_nodes = 1
    stack = [0]
    while len(stack) > 0:
        node = stack.pop()
        idx = rows[start[node]:stop[node]]
        m = idx.shape[0]
        if (max_depth != UNLIMITED and depth[node] >= max_depth) or m < 2 * min_leaf or columns.shape[0] == 0:
            continue
        mean = value[node]
        sse = 0.0
        for i in range(m):
            d = y[idx[i]] - mean
            sse += d * d
        if sse <= 0.0:
            continue
        gain, col, thr = _best_split(X, y, idx, columns, min_leaf)
        if col < 0 or gain <= REL_GAIN_TOL * sse:
            continue
        # stable partition of the node's rows
        li = idx[X[idx, col] <= thr]
        ri = idx[X[idx, col] > thr]
        s = start[node]
        rows[s:s + li.shape[0]] = li
        rows[s + li.shape[0]:stop[node]] = ri
        lc, rc = n_nodes, n_nodes + 1
        n_nodes += 2
        feature[node] = col
        threshold[node] = thr
        left[node] = lc
        right[node] = rc
        start[lc], stop[lc] = s, s + li.shape[0]
        start[rc], stop[rc] = s + li.shape[0], stop[node]
        depth[lc] = depth[rc] = depth[node] + 1
        value[lc] = y[li].mean()
        value[rc] = y[ri].mean()
        stack.append(rc)
        stack.append(lc)
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


def fit_tree(rows, targets, max_depth: int | None = None, min_leaf: int = 1,
             allowed_columns: Sequence[int] | None = None, seed: int | None = None) -> RegressionTree:
    """Grow a least-squares regression tree greedily.

    A node becomes a leaf at ``max_depth`` (None = unlimited), when it holds
    fewer than ``2 * min_leaf`` rows, or when no split reduces its squared
    error. Thresholds are midpoints between consecutive distinct values.
    ``seed`` is accepted for interface symmetry; the exact search is deterministic.
    """
    X = np.ascontiguousarray(rows, dtype=np.float64)
    y = np.ascontiguousarray(targets, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("rows must be a non-empty 2-D array aligned with targets")
    min_leaf = max(1, int(min_leaf))
    columns = (np.arange(X.shape[1], dtype=np.int64) if allowed_columns is None
               else np.array(sorted(allowed_columns), dtype=np.int64))
    depth = UNLIMITED if max_depth is None else int(max_depth)
    arrays = _grow(X, y, columns, depth, min_leaf)
    return RegressionTree(*arrays, max_depth=max_depth, min_leaf=min_leaf)
