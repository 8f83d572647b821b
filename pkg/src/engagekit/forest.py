"""Random forest baseline built from scratch: CART trees with Gini
impurity, sqrt(D) feature subsets per split and class-weighted bootstrap
sampling to counter the label imbalance. Operates on individual segment
feature vectors (no temporal context)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import class_weights, count_classes


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: Optional["_Node"] = None
    right: Optional["_Node"] = None
    klass: int = 1  # leaf majority class id

    @property
    def is_leaf(self):
        return self.left is None


def _gini_best_split(x, y, features, n_classes):
    """Best (feature, threshold, gini) over candidate features.

    Scans each sorted column once with cumulative class counts;
    thresholds are midpoints between distinct consecutive values.
    """
    n = len(y)
    best = (None, 0.0, np.inf)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        vals = x[order, f]
        counts = np.cumsum(onehot[order], axis=0)  # class counts left of each cut
        total = counts[-1]
        left_n = np.arange(1, n)
        right_n = n - left_n
        lc = counts[:-1]
        rc = total - lc
        gini_l = 1.0 - ((lc / left_n[:, None]) ** 2).sum(axis=1)
        gini_r = 1.0 - ((rc / right_n[:, None]) ** 2).sum(axis=1)
        score = (left_n * gini_l + right_n * gini_r) / n
        usable = vals[1:] > vals[:-1]
        if not usable.any():
            continue
        score = np.where(usable, score, np.inf)
        k = int(np.argmin(score))
        if score[k] < best[2]:
            best = (f, 0.5 * (vals[k] + vals[k + 1]), float(score[k]))
    return best


class DecisionTree:
    """CART classifier; leaves predict their majority class (ties break to
    the lower class id)."""

    def __init__(self, max_depth: int = 10, n_classes: int = 3, min_samples_split: int = 2):
        self.max_depth = max_depth
        self.n_classes = n_classes
        self.min_samples_split = min_samples_split
        self.root: Optional[_Node] = None

    def fit(self, x, y, rng: np.random.Generator, n_split_features: Optional[int] = None):
        x = np.asarray(x, dtype=float)
        y0 = np.asarray(y, dtype=int) - 1  # internal 0-based
        if n_split_features is None:
            n_split_features = x.shape[1]
        self.root = self._grow(x, y0, 0, rng, n_split_features)
        return self

    def _grow(self, x, y, depth, rng, n_split_features):
        counts = np.bincount(y, minlength=self.n_classes)
        node = _Node(klass=int(np.argmax(counts)) + 1)
        if (
            depth >= self.max_depth
            or len(y) < self.min_samples_split
            or np.count_nonzero(counts) == 1
        ):
            return node
        k = min(n_split_features, x.shape[1])
        features = rng.permutation(x.shape[1])[:k]
        f, thr, score = _gini_best_split(x, y, features, self.n_classes)
        if f is None:
            return node
        mask = x[:, f] < thr
        if not mask.any() or mask.all():
            return node
        node.feature, node.threshold = int(f), float(thr)
        node.left = self._grow(x[mask], y[mask], depth + 1, rng, n_split_features)
        node.right = self._grow(x[~mask], y[~mask], depth + 1, rng, n_split_features)
        return node

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.empty(len(x), dtype=int)
        for i, row in enumerate(x):
            node = self.root
            while not node.is_leaf:
                node = node.left if row[node.feature] < node.threshold else node.right
            out[i] = node.klass
        return out


class RandomForest:
    """Plurality vote over bootstrapped CART trees.

    The bootstrap draws each sample with probability proportional to its
    class weight (majority count over class count), so minority classes
    are as visible to every tree as the majority.
    """

    def __init__(
        self,
        n_trees: int = 10,
        max_depth: int = 10,
        seed: int = 0,
        n_classes: int = 3,
        weighted_bootstrap: bool = True,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.seed = seed
        self.n_classes = n_classes
        self.weighted_bootstrap = weighted_bootstrap
        self.trees: list[DecisionTree] = []

    def fit(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=int)
        rng = np.random.default_rng(self.seed)
        n = len(y)
        p = None
        if self.weighted_bootstrap:
            counts = count_classes(y)
            present = counts > 0
            w = np.zeros(3)
            w[present] = counts[present].max() / counts[present]
            sample_w = w[y - 1]
            p = sample_w / sample_w.sum()
        n_split = max(1, int(np.sqrt(x.shape[1])))
        self.trees = []
        for _ in range(self.n_trees):
            idx = rng.choice(n, size=n, replace=True, p=p)
            tree = DecisionTree(self.max_depth, self.n_classes)
            tree.fit(x[idx], y[idx], rng, n_split)
            self.trees.append(tree)
        return self

    def _votes(self, x) -> np.ndarray:
        votes = np.zeros((len(x), self.n_classes))
        for tree in self.trees:
            pred = tree.predict(x)
            votes[np.arange(len(x)), pred - 1] += 1.0
        return votes

    def predict(self, x) -> np.ndarray:
        return np.argmax(self._votes(x), axis=1) + 1

    def predict_proba(self, x) -> np.ndarray:
        return self._votes(x) / max(len(self.trees), 1)
