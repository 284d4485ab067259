"""Ensemble of unpruned Gini decision trees with per-tree random feature subsets.

Each tree draws its feature subset once, then grows top-down on the full
sample set (optionally a bootstrap resample) choosing, at every node, the
split with the lowest weighted Gini impurity among all midpoints between
consecutive distinct values of the subset's features. Ties are broken by
lower feature index, then lower threshold, using exact rational arithmetic so
the choice does not depend on float rounding.

Tree ``t`` of a forest draws from ``SeedSequence([seed, 2, t])``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .numerics import ShapeError, make_rng

_TREE_STREAM = 2


def gini_subset(labels, n: int) -> float:
    """1 - sum_i p_i^2 over the class fractions of ``labels``."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("Gini impurity of an empty subset")
    p = np.bincount(labels, minlength=n) / labels.size
    return float(1.0 - np.sum(p * p))


def gini_split(left, right, n: int) -> float:
    """Size-weighted mean impurity of the two sides; an empty side contributes 0."""
    nl, nr = len(left), len(right)
    if nl + nr == 0:
        raise ValueError("both sides of the split are empty")
    total = 0.0
    if nl:
        total += nl * gini_subset(left, n)
    if nr:
        total += nr * gini_subset(right, n)
    return total / (nl + nr)


def _exact_gini(left_counts, right_counts) -> Fraction:
    nl, nr = int(sum(left_counts)), int(sum(right_counts))
    sl = sum(int(c) * int(c) for c in left_counts)
    sr = sum(int(c) * int(c) for c in right_counts)
    N = nl + nr
    return Fraction(N * nl * nr - sl * nr - sr * nl, N * nl * nr)


def best_split(features: np.ndarray, labels: np.ndarray, candidates, n: int):
    """Minimum-Gini (feature, threshold, gini) over ``candidates``, or None if
    no candidate feature takes two distinct values. Values <= threshold go left."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    N = y.size
    cand = np.array(sorted(int(c) for c in candidates), dtype=np.int64)
    if N < 2 or cand.size == 0:
        return None
    cols = X[:, cand]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    onehot = np.zeros((N, cand.size, n), dtype=np.int64)
    np.put_along_axis(onehot, y[order][:, :, None], 1, axis=2)
    cum = np.cumsum(onehot, axis=0)[:-1]
    total = np.bincount(y, minlength=n)
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    nl = np.arange(1, N, dtype=np.float64)[:, None]
    nr = N - nl
    cf = cum.astype(np.float64)
    sl = np.sum(cf * cf, axis=2)
    rf = total - cf
    sr = np.sum(rf * rf, axis=2)
    g = np.where(valid, (N - sl / nl - sr / nr) / N, np.inf)
    best_val = float(g.min())
    # exact comparison among near-minimal candidates only
    tol = 1e-9 * max(best_val, 1e-12) + 1e-15
    best = None
    for k, j in zip(*np.nonzero(g <= best_val + tol)):
        lo, hi = xs[k, j], xs[k + 1, j]
        thr = 0.5 * (lo + hi)
        if not lo <= thr < hi:
            thr = lo
        key = (_exact_gini(cum[k, j], total - cum[k, j]), int(cand[j]), float(thr))
        if best is None or key < best:
            best = key
    g, f, thr = best
    return f, thr, float(g)


@dataclass
class Tree:
    """Flat node arrays in preorder. ``feature[k] == -1`` marks a leaf; every
    node keeps the class histogram of the samples that reached it."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def node_count(self) -> int:
        return self.feature.size

    def is_leaf(self, k: int) -> bool:
        return self.feature[k] < 0

    @property
    def depth(self) -> int:
        depth = np.zeros(self.node_count, dtype=np.int64)
        for k in range(self.node_count):
            if self.feature[k] >= 0:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of X."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active[rows] = self.feature[node[rows]] >= 0
        return node

    def leaf_distribution(self) -> np.ndarray:
        c = self.counts.astype(np.float64)
        return c / c.sum(axis=1, keepdims=True)


def build_tree(features: np.ndarray, labels: np.ndarray, feature_subset, max_depth: int | None,
               n: int) -> Tree:
    """Grow an unpruned tree. Stops at purity, ``max_depth``, single samples,
    or when no subset feature can split the node."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if y.size < 1:
        raise ValueError("cannot build a tree from zero samples")
    subset = sorted(int(f) for f in feature_subset)
    feat, thr, left, right, counts = [], [], [], [], []
    stack = [(np.arange(y.size), 0, -1, False)]
    while stack:
        idx, depth, parent, is_right = stack.pop()
        k = len(feat)
        if parent >= 0:
            (right if is_right else left)[parent] = k
        hist = np.bincount(y[idx], minlength=n)
        counts.append(hist)
        feat.append(-1); thr.append(0.0); left.append(-1); right.append(-1)
        if idx.size < 2 or np.count_nonzero(hist) == 1 or (max_depth is not None and depth >= max_depth):
            continue
        split = best_split(X[idx], y[idx], subset, n)
        if split is None:
            continue
        f, t, _ = split
        go_left = X[idx, f] <= t
        feat[k], thr[k] = f, t
        stack.append((idx[~go_left], depth + 1, k, True))
        stack.append((idx[go_left], depth + 1, k, False))
    return Tree(np.array(feat, dtype=np.int64), np.array(thr), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(counts, dtype=np.int64).reshape(-1, n))


@dataclass
class ForestModel:
    trees: list[Tree]
    feature_subsets: list[np.ndarray]
    n_features: int
    class_count: int
    n_estimators: int
    max_depth: int | None
    seed: int
    bootstrap: bool = False

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ShapeError(f"expected feature rows of length {self.n_features}, got shape {X.shape}")
        proba = np.zeros((X.shape[0], self.class_count))
        for tree in self.trees:
            proba += tree.leaf_distribution()[tree.apply(X)]
        return proba / len(self.trees)


def default_subset_size(n_features: int) -> int:
    return max(1, math.ceil(math.sqrt(n_features)))


def _fit_one(X, y, t, n_estimators, max_depth, subset_size, seed, n, bootstrap):
    rng = make_rng(seed, _TREE_STREAM, t)
    subset = np.sort(rng.choice(X.shape[1], size=subset_size, replace=False))
    if bootstrap:
        rows = rng.integers(0, y.size, size=y.size)
        return build_tree(X[rows], y[rows], subset, max_depth, n), subset
    return build_tree(X, y, subset, max_depth, n), subset


def fit_forest(features: np.ndarray, labels: np.ndarray, n_estimators: int = 112, max_depth: int | None = 31,
               subset_size: int | None = None, seed: int = 0, class_count: int | None = None,
               bootstrap: bool = False, threads: int = 1) -> ForestModel:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeError(f"features {X.shape} do not match {y.size} labels")
    if y.size < 2 or X.shape[1] < 1:
        raise ValueError("need at least 2 samples and 1 feature")
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    n = int(class_count if class_count is not None else y.max() + 1)
    d = X.shape[1]
    subset_size = default_subset_size(d) if subset_size is None else subset_size
    if not 1 <= subset_size <= d:
        raise ValueError(f"subset_size {subset_size} must lie in [1, {d}]")
    args = [(X, y, t, n_estimators, max_depth, subset_size, seed, n, bootstrap) for t in range(n_estimators)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            built = list(pool.map(lambda a: _fit_one(*a), args))
    else:
        built = [_fit_one(*a) for a in args]
    return ForestModel([b[0] for b in built], [b[1] for b in built], d, n, n_estimators, max_depth, seed, bootstrap)


def predict_forest(model: ForestModel, x: np.ndarray) -> tuple[int, np.ndarray]:
    """Mean of the per-tree leaf distributions; argmax with ties to the lower class."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a single feature vector, got shape {x.shape}")
    proba = model.predict_proba(x[None])[0]
    return int(np.argmax(proba)), proba
