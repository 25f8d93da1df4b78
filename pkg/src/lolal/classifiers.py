"""Multi-class classifiers over command feature vectors.

Three interchangeable models:

* logistic regression, one independent sigmoid per class with the
  per-class outputs normalized into a posterior distribution;
* gradient-boosted regression trees on the softmax objective (one tree
  per class per stage, fitted to the softmax residuals, Newton leaf
  values);
* a random forest with class-count leaves, for the embedding and
  feature-set benchmarks.

All of them expose ``classes`` and ``predict_proba`` and are consumed
uniformly by :func:`predict` and :func:`evaluate`. Posteriors always sum
to one; argmax ties break toward the lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .forest import RandomForest, fit_forest, tree_apply


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X.reshape(1, -1) if X.ndim == 1 else X


def _encode_labels(y) -> tuple[np.ndarray, list]:
    y = np.asarray(y)
    classes = np.unique(y)
    lookup = {c: i for i, c in enumerate(classes.tolist())}
    encoded = np.array([lookup[v] for v in y.tolist()], dtype=np.int64)
    return encoded, classes.tolist()


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# logistic regression


def logistic_loss(W, b, X, Y, l2=0.0) -> float:
    """Mean per-class sigmoid cross entropy plus an L2 penalty on W."""
    Z = X @ W.T + b
    # -y*log(s(z)) - (1-y)*log(1-s(z)) written stably as
    # max(z,0) - z*y + log(1+exp(-|z|))
    per = np.maximum(Z, 0.0) - Z * Y + np.log1p(np.exp(-np.abs(Z)))
    return float(per.sum(axis=1).mean() + 0.5 * l2 * (W ** 2).sum())


def logistic_grads(W, b, X, Y, l2=0.0):
    """Analytic gradient of :func:`logistic_loss` wrt W and b."""
    n = X.shape[0]
    R = _sigmoid(X @ W.T + b) - Y
    dW = R.T @ X / n + l2 * W
    db = R.mean(axis=0)
    return dW, db


@dataclass
class LogisticHyper:
    learning_rate: float = 0.5
    epochs: int = 400
    l2: float = 1e-4
    seed: int = 0


@dataclass
class LogisticModel:
    classes: list
    W: np.ndarray  # (K, d)
    b: np.ndarray  # (K,)
    mean: np.ndarray
    scale: np.ndarray
    hyper: LogisticHyper = field(default_factory=LogisticHyper)

    def predict_proba(self, X) -> np.ndarray:
        X = (_as_matrix(X) - self.mean) / self.scale
        sig = _sigmoid(X @ self.W.T + self.b)
        totals = sig.sum(axis=1, keepdims=True)
        uniform = np.full_like(sig, 1.0 / sig.shape[1])
        return np.where(totals > 0, sig / np.where(totals > 0, totals, 1.0), uniform)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "kind": "logistic",
            "classes": list(self.classes),
            "W": self.W.tolist(),
            "b": self.b.tolist(),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "LogisticModel":
        if payload.get("kind") != "logistic":
            raise ValueError("not a logistic model file")
        return cls(
            classes=payload["classes"],
            W=np.asarray(payload["W"]),
            b=np.asarray(payload["b"]),
            mean=np.asarray(payload["mean"]),
            scale=np.asarray(payload["scale"]),
        )


def fit_logistic(X, y, hyper: LogisticHyper | None = None) -> LogisticModel:
    """Per-class sigmoid cross-entropy minimized by full-batch gradient descent.

    Features are standardized internally (a reparameterization of the same
    model) so one fixed step size behaves across feature scales.
    Deterministic: weights start at zero.
    """
    hyper = hyper or LogisticHyper()
    X = _as_matrix(X)
    encoded, classes = _encode_labels(y)
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    n, d = X.shape
    K = len(classes)

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-8] = 1.0
    Xs = (X - mean) / scale
    Y = np.zeros((n, K))
    Y[np.arange(n), encoded] = 1.0

    W = np.zeros((K, d))
    b = np.zeros(K)
    for _ in range(hyper.epochs):
        dW, db = logistic_grads(W, b, Xs, Y, hyper.l2)
        W -= hyper.learning_rate * dW
        b -= hyper.learning_rate * db
    return LogisticModel(classes=classes, W=W, b=b, mean=mean, scale=scale, hyper=hyper)


# ---------------------------------------------------------------------------
# gradient boosting


@dataclass
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        leaves = tree_apply(self.feature, self.threshold, self.left, self.right, X)
        return self.value[leaves]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RegressionTree":
        return cls(
            feature=np.asarray(payload["feature"], dtype=np.int32),
            threshold=np.asarray(payload["threshold"], dtype=np.float64),
            left=np.asarray(payload["left"], dtype=np.int32),
            right=np.asarray(payload["right"], dtype=np.int32),
            value=np.asarray(payload["value"], dtype=np.float64),
        )


def _grow_regression_tree(X, g, h, lam, max_depth, min_leaf):
    n, d = X.shape
    features: list[int] = []
    thresholds: list[float] = []
    lefts: list[int] = []
    rights: list[int] = []
    values: list[float] = []

    def new_node(idx):
        features.append(-1)
        thresholds.append(0.0)
        lefts.append(-1)
        rights.append(-1)
        values.append(-g[idx].sum() / (h[idx].sum() + lam))
        return len(features) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node_id, idx, depth = stack.pop()
        m = idx.size
        if depth >= max_depth or m < 2 * min_leaf:
            continue
        sub = X[idx]
        order = np.argsort(sub, axis=0, kind="stable")
        sorted_x = np.take_along_axis(sub, order, axis=0)
        cum_g = np.cumsum(
            np.take_along_axis(np.broadcast_to(g[idx][:, None], sub.shape), order, axis=0),
            axis=0,
        )
        cum_h = np.cumsum(
            np.take_along_axis(np.broadcast_to(h[idx][:, None], sub.shape), order, axis=0),
            axis=0,
        )
        G = cum_g[-1, 0]
        H = cum_h[-1, 0]
        GL, HL = cum_g[:-1], cum_h[:-1]
        GR, HR = G - GL, H - HL
        gain = GL ** 2 / (HL + lam) + GR ** 2 / (HR + lam) - G ** 2 / (H + lam)
        valid = sorted_x[1:] != sorted_x[:-1]
        if min_leaf > 1:
            sizes = np.arange(1, m)[:, None]
            valid &= (sizes >= min_leaf) & (m - sizes >= min_leaf)
        gain = np.where(valid, gain, -np.inf)
        flat = int(np.argmax(gain))
        best = gain.ravel()[flat]
        if not np.isfinite(best) or best <= 1e-12:
            continue
        pos, j = divmod(flat, gain.shape[1])
        thr = 0.5 * (sorted_x[pos, j] + sorted_x[pos + 1, j])
        mask = X[idx, j] <= thr
        left_idx, right_idx = idx[mask], idx[~mask]
        if left_idx.size == 0 or right_idx.size == 0:
            continue
        features[node_id] = j
        thresholds[node_id] = thr
        left_id = new_node(left_idx)
        right_id = new_node(right_idx)
        lefts[node_id] = left_id
        rights[node_id] = right_id
        stack.append((right_id, right_idx, depth + 1))
        stack.append((left_id, left_idx, depth + 1))

    return RegressionTree(
        feature=np.asarray(features, dtype=np.int32),
        threshold=np.asarray(thresholds, dtype=np.float64),
        left=np.asarray(lefts, dtype=np.int32),
        right=np.asarray(rights, dtype=np.int32),
        value=np.asarray(values, dtype=np.float64),
    )


@dataclass
class BoostedHyper:
    n_stages: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    min_leaf: int = 1
    l2: float = 1e-3
    seed: int = 0


@dataclass
class BoostedModel:
    classes: list
    stages: list[list[RegressionTree]]  # stages[s][k]
    hyper: BoostedHyper
    degenerate: bool = False
    train_losses: list[float] = field(default_factory=list)
    n_features: int | None = None

    def raw_scores(self, X) -> np.ndarray:
        X = _as_matrix(X)
        F = np.zeros((X.shape[0], len(self.classes)))
        for stage in self.stages:
            for k, tree in enumerate(stage):
                F[:, k] += self.hyper.learning_rate * tree.predict(X)
        return F

    def predict_proba(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if self.degenerate:
            return np.ones((X.shape[0], 1))
        return softmax(self.raw_scores(X))

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "kind": "boosted",
            "classes": list(self.classes),
            "learning_rate": self.hyper.learning_rate,
            "degenerate": self.degenerate,
            "n_features": self.n_features,
            "stages": [[t.to_dict() for t in stage] for stage in self.stages],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BoostedModel":
        if payload.get("kind") != "boosted":
            raise ValueError("not a boosted model file")
        hyper = BoostedHyper(learning_rate=payload["learning_rate"])
        return cls(
            classes=payload["classes"],
            stages=[[RegressionTree.from_dict(t) for t in stage] for stage in payload["stages"]],
            hyper=hyper,
            degenerate=payload.get("degenerate", False),
            n_features=payload.get("n_features"),
        )


def fit_boosted(X, y, hyper: BoostedHyper | None = None) -> BoostedModel:
    """Stagewise softmax boosting: one tree per class per stage.

    Trees are fitted to the softmax residuals p - y with diagonal Newton
    leaf values. A single-class input yields a degenerate model that
    predicts that class with probability 1 (flagged).
    """
    hyper = hyper or BoostedHyper()
    X = _as_matrix(X)
    encoded, classes = _encode_labels(y)
    K = len(classes)
    if K < 2:
        return BoostedModel(classes=classes, stages=[], hyper=hyper, degenerate=True,
                            n_features=X.shape[1])

    n = X.shape[0]
    Y = np.zeros((n, K))
    Y[np.arange(n), encoded] = 1.0
    F = np.zeros((n, K))
    losses = []
    n_feat = X.shape[1]
    stages: list[list[RegressionTree]] = []
    for _ in range(hyper.n_stages):
        P = softmax(F)
        losses.append(float(-np.log(np.maximum(P[np.arange(n), encoded], 1e-300)).mean()))
        stage = []
        for k in range(K):
            g = P[:, k] - Y[:, k]
            h = P[:, k] * (1.0 - P[:, k])
            tree = _grow_regression_tree(
                X, g, h, hyper.l2, hyper.max_depth, hyper.min_leaf
            )
            stage.append(tree)
            F[:, k] += hyper.learning_rate * tree.predict(X)
        stages.append(stage)
    P = softmax(F)
    losses.append(float(-np.log(np.maximum(P[np.arange(n), encoded], 1e-300)).mean()))
    return BoostedModel(classes=classes, stages=stages, hyper=hyper,
                        train_losses=losses, n_features=n_feat)


# ---------------------------------------------------------------------------
# random forest classifier (class-count leaves)


@dataclass
class ForestClassifier:
    classes: list
    forest: RandomForest
    n_features: int | None = None

    def predict_proba(self, X) -> np.ndarray:
        return self.forest.predict_proba(_as_matrix(X))

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "kind": "forest",
            "classes": list(self.classes),
            "forest": self.forest.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ForestClassifier":
        if payload.get("kind") != "forest":
            raise ValueError("not a forest model file")
        return cls(classes=payload["classes"], forest=RandomForest.from_dict(payload["forest"]))


def fit_forest_classifier(X, y, n_trees: int = 20, seed: int = 0,
                          max_depth: int = 12) -> ForestClassifier:
    X = _as_matrix(X)
    encoded, classes = _encode_labels(y)
    forest = fit_forest(
        X, encoded, n_trees=n_trees, seed=seed, max_depth=max_depth,
        n_classes=len(classes),
    )
    return ForestClassifier(classes=classes, forest=forest, n_features=X.shape[1])


# ---------------------------------------------------------------------------
# prediction and evaluation


def predict(model, x) -> tuple[object, dict]:
    """Predicted class and posterior for one feature vector.

    The class is the posterior argmax; ties go to the lowest class index.
    """
    x = np.asarray(x, dtype=np.float64)
    expected = _model_dim(model)
    if expected is not None and x.shape[-1] != expected:
        raise ValueError(f"feature length {x.shape[-1]} does not match model ({expected})")
    probs = model.predict_proba(x.reshape(1, -1))[0]
    idx = int(np.argmax(probs))
    return model.classes[idx], dict(zip(model.classes, probs.tolist()))


def predict_batch(model, X) -> tuple[list, np.ndarray]:
    """Predicted classes and posterior matrix for many feature vectors."""
    probs = model.predict_proba(_as_matrix(X))
    idx = probs.argmax(axis=1)
    return [model.classes[i] for i in idx], probs


def _model_dim(model):
    if isinstance(model, LogisticModel):
        return model.W.shape[1]
    return getattr(model, "n_features", None)


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    fpr: float
    support: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "fpr": self.fpr,
            "support": self.support,
        }


@dataclass
class Metrics:
    classes: list
    per_class: dict
    macro_precision: float
    macro_recall: float
    macro_f1: float
    macro_fpr: float
    accuracy: float
    confusion: np.ndarray

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "per_class": {
                str(c): (m.to_dict() if m is not None else None)
                for c, m in self.per_class.items()
            },
            "macro": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
                "f1": self.macro_f1,
                "fpr": self.macro_fpr,
            },
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
        }


def compute_metrics(y_true, y_pred, classes: Sequence) -> Metrics:
    """One-vs-rest precision, recall, F1 and FPR per class, plus macro means.

    Classes absent from ``y_true`` get no metrics and are excluded from the
    macro averages.
    """
    classes = list(classes)
    index = {c: i for i, c in enumerate(classes)}
    K = len(classes)
    confusion = np.zeros((K, K), dtype=np.int64)
    y_true = list(y_true)
    y_pred = list(y_pred)
    for t, p in zip(y_true, y_pred):
        confusion[index[t], index[p]] += 1

    n = confusion.sum()
    per_class: dict = {}
    defined = []
    for k, cls in enumerate(classes):
        support = int(confusion[k].sum())
        if support == 0:
            per_class[cls] = None
            continue
        tp = int(confusion[k, k])
        fp = int(confusion[:, k].sum() - tp)
        fn = support - tp
        tn = int(n - tp - fp - fn)
        precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
        recall = tp / support
        f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
        fpr = fp / (fp + tn) if (fp + tn) > 0 else 0.0
        metrics = ClassMetrics(precision, recall, f1, fpr, support)
        per_class[cls] = metrics
        defined.append(metrics)

    if not defined:
        raise ValueError("no class present in the test set")
    macro = lambda attr: float(np.mean([getattr(m, attr) for m in defined]))
    accuracy = float(np.trace(confusion) / n) if n else 0.0
    return Metrics(
        classes=classes,
        per_class=per_class,
        macro_precision=macro("precision"),
        macro_recall=macro("recall"),
        macro_f1=macro("f1"),
        macro_fpr=macro("fpr"),
        accuracy=accuracy,
        confusion=confusion,
    )


def evaluate(model, X, y_true, classes: Sequence | None = None) -> Metrics:
    """Metrics of a fitted model on a labeled test set."""
    y_true = list(y_true)
    if not y_true:
        raise ValueError("empty test set")
    y_pred, _ = predict_batch(model, X)
    if classes is None:
        seen = list(model.classes)
        for c in y_true:
            if c not in seen:
                seen.append(c)
        classes = seen
    return compute_metrics(y_true, y_pred, classes)


def stratified_kfold(y, k: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Index split preserving per-class proportions across k folds."""
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    fold_members: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if idx.size < k:
            raise ValueError(f"class {cls!r} has fewer samples than folds")
        idx = idx[rng.permutation(idx.size)]
        for pos, sample in enumerate(idx):
            fold_members[pos % k].append(int(sample))
    folds = []
    for i in range(k):
        test = np.asarray(sorted(fold_members[i]), dtype=np.int64)
        train = np.asarray(
            sorted(x for j in range(k) if j != i for x in fold_members[j]), dtype=np.int64
        )
        folds.append((train, test))
    return folds
