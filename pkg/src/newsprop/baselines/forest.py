"""Random forest and extra-trees classifiers built on Gini impurity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FOREST_KINDS = ("random_forest", "extra_trees")


@dataclass
class Tree:
    feature: np.ndarray     # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray      # (nodes, 2) class counts

    def leaf_of(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def vote(self, X: np.ndarray) -> np.ndarray:
        c = self.counts[self.leaf_of(X)]
        return (c[:, 1] > c[:, 0]).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(np.array(d["feature"], dtype=np.int64), np.array(d["threshold"], dtype=np.float64),
                   np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["counts"], dtype=np.int64).reshape(-1, 2))


@dataclass
class ForestModel:
    trees: list[Tree]
    kind: str
    n_features: int
    seed: int

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n_features": self.n_features, "seed": self.seed,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        return cls([Tree.from_dict(t) for t in d["trees"]], d["kind"], d["n_features"], d["seed"])


def _gini_best_threshold(x: np.ndarray, y: np.ndarray):
    """Best midpoint threshold on one feature by weighted Gini; None if x is constant."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(xs)
    valid = np.nonzero(xs[1:] > xs[:-1])[0]
    if len(valid) == 0:
        return None
    pos_left = np.cumsum(ys)[valid]
    n_left = valid + 1.0
    n_right = n - n_left
    pos_right = ys.sum() - pos_left
    p_l = pos_left / n_left
    p_r = pos_right / n_right
    impurity = n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)
    k = int(np.argmin(impurity))
    cut = valid[k]
    return impurity[k] / n, 0.5 * (xs[cut] + xs[cut + 1])


def _gini_at(x: np.ndarray, y: np.ndarray, thr: float):
    left = x <= thr
    nl = left.sum()
    nr = len(x) - nl
    if nl == 0 or nr == 0:
        return None
    pl = y[left].mean()
    pr = y[~left].mean()
    return (nl * 2 * pl * (1 - pl) + nr * 2 * pr * (1 - pr)) / len(x)


def build_tree(X: np.ndarray, y: np.ndarray, kind: str, max_features: int, rng: np.random.Generator,
               min_samples_split: int = 2) -> Tree:
    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        pos = int(y[idx].sum())
        counts.append((len(idx) - pos, pos))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)))]
    d = X.shape[1]
    while stack:
        node, idx = stack.pop()
        pos = counts[node][1]
        if len(idx) < min_samples_split or pos == 0 or pos == len(idx):
            continue
        best = None
        tried = 0
        for f in rng.permutation(d):
            if tried >= max_features:
                break
            col = X[idx, f]
            lo, hi = col.min(), col.max()
            if lo == hi:
                continue
            tried += 1
            if kind == "random_forest":
                found = _gini_best_threshold(col, y[idx])
                if found is None:
                    continue
                score, thr = found
            else:
                thr = rng.uniform(lo, hi)
                score = _gini_at(col, y[idx], thr)
                if score is None:
                    continue
            if best is None or score < best[0]:
                best = (score, int(f), float(thr))
        if best is None:
            continue
        _, f, thr = best
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(counts, dtype=np.int64).reshape(-1, 2))


def train_forest(X, y, kind: str = "random_forest", n_trees: int = 100, seed: int = 0,
                 max_features: int | None = None) -> ForestModel:
    """Random forest: bootstrap + best Gini split among ceil(sqrt(d)) features.
    Extra trees: full sample + one uniform random threshold per candidate feature.

    Labels are 1 = fake, 0 = real (+-1 also accepted). A single-class ``y``
    yields trees that are one leaf each.
    """
    if kind not in FOREST_KINDS:
        raise ValueError(f"kind must be one of {FOREST_KINDS}")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y)
    y = (y == 1).astype(np.int64)
    if len(y) < 2:
        raise ValueError("forest needs at least two samples")
    d = X.shape[1]
    m = max_features or max(1, math.ceil(math.sqrt(d)))
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        if kind == "random_forest":
            sample = rng.integers(0, len(y), size=len(y))
            trees.append(build_tree(X[sample], y[sample], kind, m, rng))
        else:
            trees.append(build_tree(X, y, kind, m, rng))
    return ForestModel(trees, kind, d, seed)


def predict_forest(model: ForestModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Majority label (1 = fake) and vote fractions ``[p_real, p_fake]``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ValueError(f"forest expects {model.n_features} features, got {X.shape[1]}")
    votes = np.mean([t.vote(X) for t in model.trees], axis=0)
    probs = np.column_stack([1.0 - votes, votes])
    return (votes > 0.5).astype(np.int64), probs
