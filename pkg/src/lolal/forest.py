"""Decision trees and random forests with count-carrying leaves.

Trees split on (feature, threshold) pairs chosen by weighted Gini
impurity; every node stores the per-class sample counts that reached it,
so a leaf can report both a class distribution and the positive/total
ratio the token scorer needs. Rows carry integer weights, which lets
callers collapse duplicated rows without changing the fitted model.

Forests train each tree on a multinomial bootstrap of the (weighted)
training rows with sqrt(d) feature subsampling per node. Everything is
driven by one seeded generator, so a fixed seed reproduces the forest
structure bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DecisionTree:
    feature: np.ndarray  # (nodes,) int32; -1 marks a leaf
    threshold: np.ndarray  # (nodes,) float64
    left: np.ndarray  # (nodes,) int32
    right: np.ndarray  # (nodes,) int32
    counts: np.ndarray  # (nodes, n_classes) class counts at the node

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int32)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max()) if self.n_nodes else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index for every row."""
        return tree_apply(self.feature, self.threshold, self.left, self.right, X)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DecisionTree":
        return cls(
            feature=np.asarray(payload["feature"], dtype=np.int32),
            threshold=np.asarray(payload["threshold"], dtype=np.float64),
            left=np.asarray(payload["left"], dtype=np.int32),
            right=np.asarray(payload["right"], dtype=np.int32),
            counts=np.asarray(payload["counts"], dtype=np.float64),
        )


def tree_apply(feature, threshold, left, right, X) -> np.ndarray:
    """Vectorized routing of rows to leaves over any array-coded tree."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int32)
    if len(feature) == 0:
        return node
    rows = np.arange(n)
    while True:
        feat = feature[node]
        internal = feat >= 0
        if not internal.any():
            return node
        f = np.where(internal, feat, 0)
        go_left = X[rows, f] <= threshold[node]
        nxt = np.where(go_left, left[node], right[node])
        node = np.where(internal, nxt, node)


def _grow_tree(X, y, w, n_classes, rng, max_depth, max_features, min_samples_split):
    n, d = X.shape
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = w

    features: list[int] = []
    thresholds: list[float] = []
    lefts: list[int] = []
    rights: list[int] = []
    counts: list[np.ndarray] = []

    def new_node(cnt):
        features.append(-1)
        thresholds.append(0.0)
        lefts.append(-1)
        rights.append(-1)
        counts.append(cnt)
        return len(features) - 1

    root_idx = np.arange(n)
    stack = [(new_node(onehot.sum(axis=0)), root_idx, 0)]
    while stack:
        node_id, idx, depth = stack.pop()
        cnt = counts[node_id]
        total = cnt.sum()
        if (
            depth >= max_depth
            or idx.size < min_samples_split
            or np.count_nonzero(cnt) <= 1
        ):
            continue

        feats = rng.choice(d, size=min(max_features, d), replace=False)
        sub = X[np.ix_(idx, feats)]
        order = np.argsort(sub, axis=0, kind="stable")
        sorted_x = np.take_along_axis(sub, order, axis=0)
        valid = sorted_x[1:] != sorted_x[:-1]
        if not valid.any():
            continue

        best = (np.inf, -1, 0.0)
        for j in range(feats.size):
            col_valid = valid[:, j]
            if not col_valid.any():
                continue
            cum = np.cumsum(onehot[idx[order[:, j]]], axis=0)
            n_left = cum[:-1].sum(axis=1)
            n_right = total - n_left
            sq_left = (cum[:-1] ** 2).sum(axis=1)
            sq_right = ((cnt - cum[:-1]) ** 2).sum(axis=1)
            # weighted Gini: sum_child n_child * (1 - sum_k p_k^2)
            impurity = (n_left - sq_left / n_left) + (n_right - sq_right / n_right)
            impurity[~col_valid] = np.inf
            pos = int(np.argmin(impurity))
            if impurity[pos] < best[0]:
                thr = 0.5 * (sorted_x[pos, j] + sorted_x[pos + 1, j])
                best = (float(impurity[pos]), int(feats[j]), thr)

        if best[1] < 0:
            continue
        _, feat, thr = best
        mask = X[idx, feat] <= thr
        left_idx = idx[mask]
        right_idx = idx[~mask]
        if left_idx.size == 0 or right_idx.size == 0:
            continue
        features[node_id] = feat
        thresholds[node_id] = thr
        left_id = new_node(onehot[left_idx].sum(axis=0))
        right_id = new_node(onehot[right_idx].sum(axis=0))
        lefts[node_id] = left_id
        rights[node_id] = right_id
        # push right first so the left subtree is grown (and consumes rng)
        # before the right one
        stack.append((right_id, right_idx, depth + 1))
        stack.append((left_id, left_idx, depth + 1))

    return DecisionTree(
        feature=np.asarray(features, dtype=np.int32),
        threshold=np.asarray(thresholds, dtype=np.float64),
        left=np.asarray(lefts, dtype=np.int32),
        right=np.asarray(rights, dtype=np.int32),
        counts=np.vstack(counts),
    )


@dataclass
class RandomForest:
    trees: list[DecisionTree]
    n_classes: int
    oob_masks: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def leaf_ratios(self, X: np.ndarray, positive_class: int = 1) -> np.ndarray:
        """Per-tree fraction of the positive class in each row's leaf, (n, trees)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.empty((X.shape[0], self.n_trees))
        for t, tree in enumerate(self.trees):
            leaf = tree.apply(X)
            cnt = tree.counts[leaf]
            out[:, t] = cnt[:, positive_class] / cnt.sum(axis=1)
        return out

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Mean of the per-tree leaf class distributions, (n, n_classes)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        probs = np.zeros((X.shape[0], self.n_classes))
        for tree in self.trees:
            cnt = tree.counts[tree.apply(X)]
            probs += cnt / cnt.sum(axis=1, keepdims=True)
        return probs / self.n_trees

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RandomForest":
        return cls(
            trees=[DecisionTree.from_dict(t) for t in payload["trees"]],
            n_classes=payload["n_classes"],
        )


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    sample_weight: np.ndarray | None = None,
    n_trees: int = 20,
    seed: int = 0,
    max_depth: int = 12,
    min_samples_split: int = 2,
    n_classes: int | None = None,
) -> RandomForest:
    """Fit a random forest on (optionally weighted) labeled rows.

    Each tree sees a multinomial bootstrap of size sum(weights) drawn over
    the rows; rows drawn zero times are that tree's out-of-bag set. Feature
    subsampling is sqrt(d) per node. Leaf counts are in-bag counts.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    if sample_weight is None:
        sample_weight = np.ones(n)
    w = np.asarray(sample_weight, dtype=np.float64)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    total = w.sum()
    if total <= 0:
        raise ValueError("empty training set")
    p = w / total
    n_draws = int(round(total))
    max_features = max(1, int(np.sqrt(d)))

    rng = np.random.default_rng(seed)
    trees = []
    oob_masks = []
    for _ in range(n_trees):
        boot = rng.multinomial(n_draws, p).astype(np.float64)
        keep = boot > 0
        tree = _grow_tree(
            X[keep], y[keep], boot[keep], n_classes, rng,
            max_depth, max_features, min_samples_split,
        )
        trees.append(tree)
        oob_masks.append((~keep) & (w > 0))
    return RandomForest(trees=trees, n_classes=n_classes, oob_masks=oob_masks)


def oob_accuracy(forest: RandomForest, X: np.ndarray, y: np.ndarray) -> float:
    """Accuracy of out-of-bag majority predictions (rows with no OOB tree skipped)."""
    if not forest.oob_masks:
        raise ValueError("forest was not fitted in this process")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    probs = np.zeros((X.shape[0], forest.n_classes))
    votes = np.zeros(X.shape[0])
    for tree, mask in zip(forest.trees, forest.oob_masks):
        if not mask.any():
            continue
        cnt = tree.counts[tree.apply(X[mask])]
        probs[mask] += cnt / cnt.sum(axis=1, keepdims=True)
        votes[mask] += 1
    covered = votes > 0
    if not covered.any():
        raise ValueError("no out-of-bag rows")
    pred = probs[covered].argmax(axis=1)
    return float((pred == y[covered]).mean())
