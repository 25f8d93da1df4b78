"""Versioned model files.

One JSON envelope for every model kind the pipeline produces; the "kind"
field dispatches loading. Writes are atomic (write-then-rename).
"""

from __future__ import annotations

import json

from .anomaly import NaiveBayesModel
from .classifiers import BoostedModel, ForestClassifier, LogisticModel
from .embeddings import EmbeddingModel
from .token_scores import TokenScoreTable
from .tokenizer import Vocabulary, _atomic_write_json

_KINDS = {
    "logistic": LogisticModel,
    "boosted": BoostedModel,
    "forest": ForestClassifier,
    "embedding": EmbeddingModel,
    "naive_bayes": NaiveBayesModel,
}


def save_model(path: str, model) -> None:
    """Write any fitted model (or score table / vocabulary) to one file."""
    if isinstance(model, TokenScoreTable):
        payload = model.to_dict()
        payload["kind"] = "score_table"
    elif isinstance(model, Vocabulary):
        payload = model.to_dict()
        payload["kind"] = "vocabulary"
    else:
        payload = model.to_dict()
    payload.setdefault("version", 1)
    _atomic_write_json(path, payload)


def load_model(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    kind = payload.get("kind")
    if kind in _KINDS:
        return _KINDS[kind].from_dict(payload)
    if kind == "score_table":
        return TokenScoreTable.from_dict(payload)
    if kind == "vocabulary":
        return Vocabulary.from_dict(payload)
    raise ValueError(f"unknown model kind {kind!r}")
