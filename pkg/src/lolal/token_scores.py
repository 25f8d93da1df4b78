"""Per-token maliciousness scores from a random forest.

Every token occurrence in the labeled data becomes one training row: the
token's embedding concatenated with the one-hot of the sample's binary
name, labeled with the sample's label (1 for any malicious class). A
token's score against a forest is the mean over trees of the positive
fraction in the leaf the token lands in, which is a probability in [0, 1].

Scores are kept per (token, LOLBIN) pair, because the same token can be
benign under one binary and suspicious under another. Pairs never seen in
the labeled data fall back to an uninformative default of 0.5.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .embeddings import EmbeddingModel
from .forest import RandomForest, fit_forest
from .tokenizer import LOLBINS, LOLBIN_INDEX, RawSample, Vocabulary, normalize, tokenize


def one_hot_lolbin(lolbin: str) -> np.ndarray:
    vec = np.zeros(len(LOLBINS))
    vec[LOLBIN_INDEX[lolbin]] = 1.0
    return vec


def token_features(token: str, lolbin: str, emb: EmbeddingModel) -> np.ndarray:
    """Embedding of the token followed by the one-hot of the binary name."""
    return np.concatenate([emb.lookup(token), one_hot_lolbin(lolbin)])


def fit_token_forest(
    samples: Sequence[tuple[np.ndarray, int]] | tuple[np.ndarray, np.ndarray],
    n_trees: int = 20,
    seed: int = 0,
    max_depth: int = 12,
) -> RandomForest:
    """Fit the binary token forest on (features, 0/1 label) rows.

    Duplicate rows are collapsed into integer weights before fitting (the
    weighted fit is equivalent), and rows are canonically ordered first, so
    the result does not depend on the order the rows came in.
    """
    if isinstance(samples, tuple) and len(samples) == 2:
        X, y = samples
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
    else:
        X = np.asarray([f for f, _ in samples], dtype=np.float64)
        y = np.asarray([l for _, l in samples], dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty token training set")
    if len(np.unique(y)) < 2:
        raise ValueError("degenerate token training set")

    combined = np.column_stack([X, y.astype(np.float64)])
    unique_rows, weights = np.unique(combined, axis=0, return_counts=True)
    Xu = unique_rows[:, :-1]
    yu = unique_rows[:, -1].astype(np.int64)
    return fit_forest(
        Xu, yu, sample_weight=weights.astype(np.float64),
        n_trees=n_trees, seed=seed, max_depth=max_depth, n_classes=2,
    )


def score_token(forest: RandomForest, feats: np.ndarray) -> float:
    """Mean over trees of the positive fraction in the leaf ``feats`` reaches."""
    ratios = forest.leaf_ratios(np.asarray(feats, dtype=np.float64).reshape(1, -1))
    return float(np.mean(ratios[0]))


def score_tokens(forest: RandomForest, feats: np.ndarray) -> np.ndarray:
    """Batch version of :func:`score_token`."""
    return forest.leaf_ratios(feats).mean(axis=1)


@dataclass
class TokenScoreTable:
    """Score per (token, LOLBIN) pair with a default for unknown pairs."""

    scores: dict[tuple[str, str], float] = field(default_factory=dict)
    default_score: float = 0.5

    def lookup(self, token: str, lolbin: str) -> float:
        return self.scores.get((token, lolbin), self.default_score)

    def __len__(self) -> int:
        return len(self.scores)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "default_score": self.default_score,
            "scores": [[t, l, s] for (t, l), s in sorted(self.scores.items())],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TokenScoreTable":
        if payload.get("version") != 1:
            raise ValueError("unsupported score table version")
        return cls(
            scores={(t, l): float(s) for t, l, s in payload["scores"]},
            default_score=payload["default_score"],
        )

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["token", "lolbin", "score"])
            for (token, lolbin), score in sorted(
                self.scores.items(), key=lambda kv: (-kv[1], kv[0])
            ):
                writer.writerow([token, lolbin, f"{score:.6f}"])


def build_score_table(
    labeled: Iterable[RawSample],
    emb: EmbeddingModel,
    vocab: Vocabulary,
    n_trees: int = 20,
    seed: int = 0,
    max_depth: int = 12,
) -> TokenScoreTable:
    """Train the token forest on labeled samples and score every observed pair.

    Each sample's tokens all inherit the sample's binary label. The table
    holds one entry per distinct (token, LOLBIN) pair seen in the data;
    anything else resolves to the 0.5 default.
    """
    token_vecs: dict[str, np.ndarray] = {}
    pair_rows: dict[tuple[str, str], int] = {}
    pair_labels: list[tuple[int, int]] = []  # (row index, label) per occurrence
    feats_list: list[np.ndarray] = []

    saw = {0: False, 1: False}
    for sample in labeled:
        if sample.label is None:
            raise ValueError(f"sample {sample.sample_id} is unlabeled")
        label = 0 if sample.label == "Benign" else 1
        saw[label] = True
        seq = normalize(tokenize(sample), vocab)
        for token in seq.tokens:
            key = (token, sample.lolbin)
            row = pair_rows.get(key)
            if row is None:
                vec = token_vecs.get(token)
                if vec is None:
                    vec = emb.lookup(token)
                    token_vecs[token] = vec
                row = len(feats_list)
                pair_rows[key] = row
                feats_list.append(np.concatenate([vec, one_hot_lolbin(sample.lolbin)]))
            pair_labels.append((row, label))

    if not feats_list:
        raise ValueError("no tokens in labeled data")
    if not (saw[0] and saw[1]):
        raise ValueError("degenerate token training set")

    feats = np.vstack(feats_list)
    occ = np.asarray(pair_labels, dtype=np.int64)
    X = feats[occ[:, 0]]
    y = occ[:, 1]
    forest = fit_token_forest((X, y), n_trees=n_trees, seed=seed, max_depth=max_depth)

    pair_scores = score_tokens(forest, feats)
    table = TokenScoreTable()
    for key, row in pair_rows.items():
        table.scores[key] = float(pair_scores[row])
    return table
