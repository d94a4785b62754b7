"""Histogram-based classification and regression trees, and random forests.

Features are discretized once by :class:`Binner`; split search then works
on per-bin class counts (classification) or gradient/hessian sums
(boosting). Thresholds are stored in raw feature units so a fitted tree
needs no binner at prediction time: ``x <= threshold`` goes left.
"""

import dataclasses

import numpy as np

from ..categories import N_RACES
from .base import check_xy

MAX_BINS = 255


class Binner:
    """Per-feature cut points; bin ``b`` holds ``cuts[b-1] < x <= cuts[b]``.

    Features with at most ``max_bins`` distinct values are cut at the
    midpoints between consecutive values, so every possible split of the
    training data is representable. Others are cut at quantiles.
    """

    def __init__(self, max_bins=MAX_BINS, sample=200_000, seed=0):
        self.max_bins = max_bins
        self.sample = sample
        self.seed = seed

    def fit(self, X):
        if len(X) > self.sample:
            rng = np.random.default_rng(self.seed)
            X = X[np.sort(rng.choice(len(X), self.sample, replace=False))]
        self.cuts_ = []
        for j in range(X.shape[1]):
            u = np.unique(X[:, j])
            if len(u) <= self.max_bins:
                cuts = (u[:-1] + u[1:]) / 2.0
            else:
                q = np.quantile(X[:, j], np.linspace(0, 1, self.max_bins + 1)[1:-1],
                                method="lower")
                cuts = np.unique(q)
            self.cuts_.append(cuts)
        self.n_bins_ = np.array([len(c) + 1 for c in self.cuts_])
        return self

    def transform(self, X):
        out = np.empty(X.shape, dtype=np.uint8)
        for j, cuts in enumerate(self.cuts_):
            out[:, j] = np.searchsorted(cuts, X[:, j], side="left")
        return out

    def threshold(self, feature, bin_):
        return float(self.cuts_[feature][bin_])


@dataclasses.dataclass(frozen=True, eq=False)
class TreeModel:
    """Binary tree in flat arrays; ``feature == -1`` marks a leaf.

    ``value`` rows are class distributions for classification trees and a
    single raw score (column 0) for boosting trees.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    @property
    def depth(self):
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X):
        """Leaf index reached by each row."""
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r, n, ff = rows[inner], node[inner], f[inner]
            go_left = X[r, ff] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        return self.value[self.apply(X)]

    def to_dict(self):
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(feature=np.array(d["feature"], dtype=np.intp),
                   threshold=np.array(d["threshold"], dtype=float),
                   left=np.array(d["left"], dtype=np.intp),
                   right=np.array(d["right"], dtype=np.intp),
                   value=np.array(d["value"], dtype=float))


class _Builder:
    """Accumulates nodes in pre-order."""

    def __init__(self):
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

    def add(self, value):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def split(self, node, feature, threshold, left, right):
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right

    def finish(self):
        return TreeModel(feature=np.array(self.feature, dtype=np.intp),
                         threshold=np.array(self.threshold, dtype=float),
                         left=np.array(self.left, dtype=np.intp),
                         right=np.array(self.right, dtype=np.intp),
                         value=np.array(self.value, dtype=float))


def _histogram(B, idx, feats, n_bins, weights):
    """Sum ``weights`` (n, k) per (feature, bin): returns (len(feats), n_bins, k)."""
    k = weights.shape[1]
    codes = B[np.ix_(idx, feats)].astype(np.intp)
    codes += (np.arange(len(feats)) * n_bins)[None, :]
    out = np.empty((len(feats) * n_bins, k))
    flat = codes.ravel()
    for c in range(k):
        w = np.repeat(weights[idx, c], len(feats))
        out[:, c] = np.bincount(flat, weights=w, minlength=len(feats) * n_bins)
    return out.reshape(len(feats), n_bins, k)


def _class_histogram(B, idx, feats, n_bins, y):
    codes = B[np.ix_(idx, feats)].astype(np.intp)
    codes = codes * N_RACES + y[idx][:, None]
    codes += (np.arange(len(feats)) * n_bins * N_RACES)[None, :]
    counts = np.bincount(codes.ravel(), minlength=len(feats) * n_bins * N_RACES)
    return counts.reshape(len(feats), n_bins, N_RACES).astype(float)


def _best_gini_split(hist, min_leaf):
    """Best (feature slot, bin, gain) by weighted Gini decrease, or None."""
    left = np.cumsum(hist, axis=1)[:, :-1, :]
    total = hist.sum(axis=1)[:, None, :]
    right = total - left
    nl = left.sum(axis=2)
    nr = right.sum(axis=2)
    n = total.sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        impurity_l = nl - np.sum(left * left, axis=2) / nl
        impurity_r = nr - np.sum(right * right, axis=2) / nr
    parent = n - np.sum(total * total, axis=2) / n
    gain = parent - impurity_l - impurity_r
    gain = np.where((nl >= min_leaf) & (nr >= min_leaf), gain, -np.inf)
    if gain.size == 0:
        return None
    flat = int(np.argmax(gain))
    f, b = divmod(flat, gain.shape[1])
    g = gain[f, b]
    # relative guard against float noise on pure or unsplittable nodes
    if not g > 1e-12 * max(float(n[0, 0]), 1.0):
        return None
    return f, b, float(g)


def _grow_classifier(X, y, B, binner, idx, max_depth, min_leaf, max_features, rng):
    builder = _Builder()
    n_features = X.shape[1]
    n_bins = int(binner.n_bins_.max())

    def dist(rows):
        counts = np.bincount(y[rows], minlength=N_RACES).astype(float)
        return counts / counts.sum()

    stack = [(idx, 0, builder.add(dist(idx)))]
    while stack:
        rows, depth, node = stack.pop()
        if depth >= max_depth or len(rows) < 2 * min_leaf:
            continue
        if np.all(y[rows] == y[rows[0]]):
            continue
        if max_features < n_features:
            feats = np.sort(rng.choice(n_features, max_features, replace=False))
        else:
            feats = np.arange(n_features)
        hist = _class_histogram(B, rows, feats, n_bins, y)
        best = _best_gini_split(hist, min_leaf)
        if best is None:
            continue
        slot, b, _ = best
        f = int(feats[slot])
        go_left = B[rows, f] <= b
        lrows, rrows = rows[go_left], rows[~go_left]
        lnode = builder.add(dist(lrows))
        rnode = builder.add(dist(rrows))
        builder.split(node, f, binner.threshold(f, b), lnode, rnode)
        stack.append((rrows, depth + 1, rnode))
        stack.append((lrows, depth + 1, lnode))
    return builder.finish()


def train_tree(X, y, max_depth=6, min_leaf=1, seed=0, binner=None):
    """Greedy CART classification tree maximizing Gini impurity decrease.

    Leaves hold the empirical class distribution of their training rows.
    ``max_depth=0`` gives a single leaf with the class base rates.
    """
    X, y = check_xy(X, y)
    binner = binner or Binner(seed=seed).fit(X)
    B = binner.transform(X)
    rng = np.random.default_rng(seed)
    return _grow_classifier(X, y, B, binner, np.arange(len(y)), max_depth,
                            max(int(min_leaf), 1), X.shape[1], rng)


@dataclasses.dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple
    seeds: tuple = ()
    family: str = "rf"
    layout: str = None
    params: dict = dataclasses.field(default_factory=dict)

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        total = np.zeros((len(X), N_RACES))
        for tree in self.trees:
            total += tree.predict_proba(X)
        return total / len(self.trees)

    def to_dict(self):
        return {"trees": [t.to_dict() for t in self.trees],
                "seeds": list(self.seeds)}

    @classmethod
    def from_dict(cls, d, **meta):
        return cls(trees=tuple(TreeModel.from_dict(t) for t in d["trees"]),
                   seeds=tuple(d["seeds"]), **meta)


def train_forest(X, y, n_trees=100, feature_subsample=None, row_subsample=1.0,
                 bootstrap=True, max_depth=10, min_leaf=1, seed=0, layout=None):
    """Random forest of Gini trees.

    Parameters
    ----------
    feature_subsample : float or None
        Fraction of features tried at each split; ``None`` means
        ``sqrt(p) / p``, 1.0 disables feature subsampling.
    row_subsample : float
        Rows drawn per tree, as a fraction of the training set.
    bootstrap : bool
        Draw rows with replacement. With ``bootstrap=False`` and
        ``row_subsample=1`` every tree sees all rows.
    """
    X, y = check_xy(X, y)
    n, p = X.shape
    if feature_subsample is None:
        max_features = max(1, int(round(np.sqrt(p))))
    else:
        max_features = min(p, max(1, int(round(feature_subsample * p))))
    n_rows = max(1, int(round(row_subsample * n)))
    binner = Binner(seed=seed).fit(X)
    B = binner.transform(X)
    seeds = tuple(int(s) for s in np.random.SeedSequence(seed).generate_state(n_trees))
    trees = []
    for s in seeds:
        rng = np.random.default_rng(s)
        if bootstrap:
            idx = np.sort(rng.integers(0, n, n_rows))
        elif n_rows < n:
            idx = np.sort(rng.choice(n, n_rows, replace=False))
        else:
            idx = np.arange(n)
        trees.append(_grow_classifier(X, y, B, binner, idx, max_depth,
                                      max(int(min_leaf), 1), max_features, rng))
    params = {"n_trees": n_trees, "feature_subsample": feature_subsample,
              "row_subsample": row_subsample, "bootstrap": bootstrap,
              "max_depth": max_depth, "min_leaf": min_leaf}
    return ForestModel(trees=tuple(trees), seeds=seeds, layout=layout, params=params)


# -- second-order regression trees for boosting -------------------------------

def _best_newton_split(G, H, min_leaf_hess, counts, min_leaf, leaf_penalty, gamma):
    """Best split by the second-order gain, or None when no split gains > 0."""
    GL = np.cumsum(G, axis=1)[:, :-1]
    HL = np.cumsum(H, axis=1)[:, :-1]
    NL = np.cumsum(counts, axis=1)[:, :-1]
    Gt = G.sum(axis=1)[:, None]
    Ht = H.sum(axis=1)[:, None]
    Nt = counts.sum(axis=1)[:, None]
    GR, HR, NR = Gt - GL, Ht - HL, Nt - NL
    gain = 0.5 * (GL * GL / (HL + leaf_penalty) + GR * GR / (HR + leaf_penalty)
                  - Gt * Gt / (Ht + leaf_penalty)) - gamma
    ok = ((NL >= min_leaf) & (NR >= min_leaf)
          & (HL >= min_leaf_hess) & (HR >= min_leaf_hess))
    gain = np.where(ok, gain, -np.inf)
    if gain.size == 0:
        return None
    flat = int(np.argmax(gain))
    f, b = divmod(flat, gain.shape[1])
    if not gain[f, b] > 0:
        return None
    return f, b


def grow_newton_tree(B, binner, grad, hess, max_depth, min_leaf=1, gamma=0.0,
                     leaf_penalty=1.0, min_leaf_hess=1e-6):
    """Regression tree on gradient/hessian statistics (XGBoost-style).

    Leaf weight is ``-G / (H + leaf_penalty)``; a split is kept only when
    its gain exceeds ``gamma``.
    """
    n, p = B.shape
    n_bins = int(binner.n_bins_.max())
    feats = np.arange(p)
    builder = _Builder()
    weights = np.column_stack([grad, hess, np.ones(n)])

    def leaf(rows):
        return [-grad[rows].sum() / (hess[rows].sum() + leaf_penalty)]

    root = np.arange(n)
    stack = [(root, 0, builder.add(leaf(root)))]
    while stack:
        rows, depth, node = stack.pop()
        if depth >= max_depth or len(rows) < 2 * min_leaf:
            continue
        hist = _histogram(B, rows, feats, n_bins, weights)
        best = _best_newton_split(hist[..., 0], hist[..., 1], min_leaf_hess,
                                  hist[..., 2], min_leaf, leaf_penalty, gamma)
        if best is None:
            continue
        f, b = best
        go_left = B[rows, f] <= b
        lrows, rrows = rows[go_left], rows[~go_left]
        lnode = builder.add(leaf(lrows))
        rnode = builder.add(leaf(rrows))
        builder.split(node, int(f), binner.threshold(int(f), b), lnode, rnode)
        stack.append((rrows, depth + 1, rnode))
        stack.append((lrows, depth + 1, lnode))
    return builder.finish()
