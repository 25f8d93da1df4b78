"""Per-class Gaussian naive-Bayes density and anomaly scores.

Each class keeps an independent Gaussian per feature (population mean and
variance, variance floored so the log density never diverges). A sample's
anomaly score against a class is the negative log likelihood

    A(x) = -sum_j log N(x_j; mean_cj, var_cj)

which grows as the sample moves away from the class profile, so the
highest-scoring unlabeled samples are the class's outliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

VARIANCE_FLOOR = 1e-6

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class NaiveBayesModel:
    means: dict  # class -> (d,) array
    variances: dict  # class -> (d,) array, floored
    counts: dict = field(default_factory=dict)  # class -> sample count

    @property
    def classes(self) -> list:
        return list(self.means)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "kind": "naive_bayes",
            "classes": [
                {
                    "label": c,
                    "mean": self.means[c].tolist(),
                    "variance": self.variances[c].tolist(),
                    "count": self.counts.get(c, 0),
                }
                for c in self.means
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "NaiveBayesModel":
        if payload.get("kind") != "naive_bayes":
            raise ValueError("not a naive bayes model file")
        means, variances, counts = {}, {}, {}
        for entry in payload["classes"]:
            label = entry["label"]
            means[label] = np.asarray(entry["mean"], dtype=np.float64)
            variances[label] = np.asarray(entry["variance"], dtype=np.float64)
            counts[label] = entry["count"]
        return cls(means=means, variances=variances, counts=counts)


def fit_nb(assignments: dict, variance_floor: float = VARIANCE_FLOOR) -> NaiveBayesModel:
    """Fit per-class feature Gaussians from class -> feature-vector arrays.

    Population (biased) variance; classes with fewer than two samples get
    the floor variance in every coordinate.
    """
    if not assignments:
        raise ValueError("no classes to fit")
    means, variances, counts = {}, {}, {}
    for label, vectors in assignments.items():
        X = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
        if X.shape[0] == 0:
            raise ValueError(f"class {label!r} has no samples")
        counts[label] = int(X.shape[0])
        means[label] = X.mean(axis=0)
        if X.shape[0] < 2:
            variances[label] = np.full(X.shape[1], variance_floor)
        else:
            variances[label] = np.maximum(X.var(axis=0), variance_floor)
    return NaiveBayesModel(means=means, variances=variances, counts=counts)


def anomaly_score(model: NaiveBayesModel, x: np.ndarray, label) -> float:
    """Negative log likelihood of ``x`` under the class's Gaussians."""
    if label not in model.means:
        raise KeyError(f"class {label!r} was not fitted")
    mu = model.means[label]
    var = model.variances[label]
    x = np.asarray(x, dtype=np.float64)
    return float(0.5 * np.sum(_LOG_2PI + np.log(var) + (x - mu) ** 2 / var))


def anomaly_scores(model: NaiveBayesModel, X: np.ndarray, labels) -> np.ndarray:
    """Anomaly score of each row against its own (per-row) class."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = np.empty(X.shape[0])
    for i, label in enumerate(labels):
        out[i] = anomaly_score(model, X[i], label)
    return out
