"""Fixed-length feature vectors for command-line samples (cmd2vec).

A sample's normalized tokens are embedded and pooled into one vector.
The full layout is

    [ min_pool(E) | max_pool(E) | avg_pool(E) |
      token_count | rare_count | top3_scores(3) | one_hot_lolbin(L) ]

which is 3*E + 5 + L values. Four feature sets are supported:

    S       top-20 token scores (zero padded) + one-hot, length 20 + L
    V       full layout, plain-mean pooling, score slots zeroed
    S+V     full layout, plain-mean pooling, real top-3 scores
    S+V(W)  full layout, score-weighted average pooling, real top-3 scores

Weighted pooling uses each token's maliciousness score as its weight so
suspicious tokens dominate the average; when every score is zero the pool
falls back to the plain mean (flagged on the output).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingModel
from .token_scores import TokenScoreTable
from .tokenizer import LOLBINS, RARE, RawSample, Vocabulary, normalize, tokenize

MODE_S = "S"
MODE_V = "V"
MODE_SV = "S+V"
MODE_SVW = "S+V(W)"
FEATURE_SETS = (MODE_S, MODE_V, MODE_SV, MODE_SVW)

TOP_SCORES_FULL = 3
TOP_SCORES_S = 20


@dataclass
class FeatureVector:
    values: np.ndarray
    mode: str
    used_mean_fallback: bool = False


def feature_length(dim: int, n_lolbins: int = len(LOLBINS), mode: str = MODE_SVW) -> int:
    if mode == MODE_S:
        return TOP_SCORES_S + n_lolbins
    return 3 * dim + 5 + n_lolbins


def feature_names(dim: int, lolbins: Sequence[str] = LOLBINS, mode: str = MODE_SVW) -> list[str]:
    """Column names for CSV export, matching the vector layout."""
    if mode == MODE_S:
        return [f"score_{i}" for i in range(TOP_SCORES_S)] + [f"lolbin_{b}" for b in lolbins]
    names = [f"min_{j}" for j in range(dim)]
    names += [f"max_{j}" for j in range(dim)]
    names += [f"avg_{j}" for j in range(dim)]
    names += ["token_count", "rare_count", "score_0", "score_1", "score_2"]
    names += [f"lolbin_{b}" for b in lolbins]
    return names


def _check_mode(mode: str) -> None:
    if mode not in FEATURE_SETS:
        raise ValueError(f"unknown feature set {mode!r}")


def featurize_tokens(
    tokens: Sequence[str],
    lolbin: str,
    emb: EmbeddingModel,
    scores: TokenScoreTable,
    mode: str = MODE_SVW,
    lolbins: Sequence[str] = LOLBINS,
) -> FeatureVector:
    """Pool an already-normalized token sequence into one feature vector."""
    _check_mode(mode)
    if not tokens:
        raise ValueError("empty command")
    one_hot = np.zeros(len(lolbins))
    one_hot[list(lolbins).index(lolbin)] = 1.0

    s = np.array([scores.lookup(tok, lolbin) for tok in tokens])

    if mode == MODE_S:
        top = np.zeros(TOP_SCORES_S)
        ordered = np.sort(s)[::-1][:TOP_SCORES_S]
        top[: ordered.size] = ordered
        return FeatureVector(np.concatenate([top, one_hot]), mode)

    vecs = emb.matrix_for(list(tokens))
    min_pool = vecs.min(axis=0)
    max_pool = vecs.max(axis=0)
    fallback = False
    if mode == MODE_SVW:
        denom = s.sum()
        if denom == 0.0:
            avg_pool = vecs.mean(axis=0)
            fallback = True
        else:
            avg_pool = (s @ vecs) / denom
    else:
        avg_pool = vecs.mean(axis=0)

    top3 = np.zeros(TOP_SCORES_FULL)
    if mode != MODE_V:
        ordered = np.sort(s)[::-1][:TOP_SCORES_FULL]
        top3[: ordered.size] = ordered

    counts = np.array([float(len(tokens)), float(sum(1 for t in tokens if t == RARE))])
    values = np.concatenate([min_pool, max_pool, avg_pool, counts, top3, one_hot])
    return FeatureVector(values, mode, used_mean_fallback=fallback)


def featurize(
    sample: RawSample,
    emb: EmbeddingModel,
    scores: TokenScoreTable,
    vocab: Vocabulary,
    mode: str = MODE_SVW,
    lolbins: Sequence[str] = LOLBINS,
) -> FeatureVector:
    """Tokenize, normalize and pool one sample into its feature vector."""
    seq = normalize(tokenize(sample), vocab)
    return featurize_tokens(seq.tokens, sample.lolbin, emb, scores, mode, lolbins)


def ablation_feature_sets(
    sample: RawSample,
    emb: EmbeddingModel,
    scores: TokenScoreTable,
    vocab: Vocabulary,
    modes: Sequence[str] = FEATURE_SETS,
) -> dict[str, FeatureVector]:
    """The sample's feature vector under each requested feature set."""
    return {mode: featurize(sample, emb, scores, vocab, mode) for mode in modes}


class FeatureMatrixBuilder:
    """Batch featurizer for a fixed corpus.

    Tokenization, embedding lookups and the score-independent pools are
    done once; rebuilding against a new score table only recomputes the
    weighted average and the top-score slots. Produces the same numbers as
    :func:`featurize` row by row.
    """

    def __init__(self, samples: Sequence[RawSample], emb: EmbeddingModel,
                 vocab: Vocabulary, mode: str = MODE_SVW):
        _check_mode(mode)
        if mode == MODE_S:
            raise ValueError("builder supports the pooled layouts only")
        self.mode = mode
        self.dim = emb.dim
        self.sample_ids = [s.sample_id for s in samples]

        token_ids: dict[str, int] = {}
        uniq_tokens: list[str] = []
        flat_tokens: list[int] = []
        starts = [0]
        lolbin_idx = np.empty(len(samples), dtype=np.int64)
        rare_counts = np.empty(len(samples))
        for i, sample in enumerate(samples):
            seq = normalize(tokenize(sample), vocab)
            if not seq.tokens:
                raise ValueError(f"empty command in sample {sample.sample_id}")
            for tok in seq.tokens:
                tid = token_ids.get(tok)
                if tid is None:
                    tid = len(uniq_tokens)
                    token_ids[tok] = tid
                    uniq_tokens.append(tok)
                flat_tokens.append(tid)
            starts.append(len(flat_tokens))
            lolbin_idx[i] = LOLBINS.index(sample.lolbin)
            rare_counts[i] = seq.rare_count

        self.uniq_tokens = uniq_tokens
        self.uniq_vectors = emb.matrix_for(uniq_tokens)
        self.flat_ids = np.asarray(flat_tokens, dtype=np.int64)
        self.starts = np.asarray(starts[:-1], dtype=np.int64)
        self.lengths = np.diff(np.asarray(starts, dtype=np.int64))
        self.lolbin_idx = lolbin_idx
        self.lolbin_names = [LOLBINS[i] for i in lolbin_idx]
        self.flat_lolbins = np.repeat(lolbin_idx, self.lengths)

        flat_vecs = self.uniq_vectors[self.flat_ids]
        n = len(samples)
        self.min_pool = np.vstack(
            [np.minimum.reduceat(flat_vecs[:, j], self.starts) for j in range(self.dim)]
        ).T
        self.max_pool = np.vstack(
            [np.maximum.reduceat(flat_vecs[:, j], self.starts) for j in range(self.dim)]
        ).T
        self.sum_pool = np.add.reduceat(flat_vecs, self.starts, axis=0)
        self.mean_pool = self.sum_pool / self.lengths[:, None]
        self.flat_vecs = flat_vecs
        self.counts = np.column_stack([self.lengths.astype(float), rare_counts])
        self.one_hot = np.zeros((n, len(LOLBINS)))
        self.one_hot[np.arange(n), lolbin_idx] = 1.0
        # position of each flat token within its sample, for top-k extraction
        self.positions = np.arange(len(self.flat_ids)) - np.repeat(self.starts, self.lengths)
        self.segment = np.repeat(np.arange(n), self.lengths)

    def _flat_scores(self, table: TokenScoreTable) -> np.ndarray:
        # score of every unique (token, lolbin) pair actually present
        cache: dict[tuple[int, int], float] = {}
        out = np.empty(len(self.flat_ids))
        lookup = table.lookup
        toks = self.uniq_tokens
        for i, (tid, lb) in enumerate(zip(self.flat_ids, self.flat_lolbins)):
            key = (tid, lb)
            val = cache.get(key)
            if val is None:
                val = lookup(toks[tid], LOLBINS[lb])
                cache[key] = val
            out[i] = val
        return out

    def _top_scores(self, s: np.ndarray, k: int) -> np.ndarray:
        # stable sort by (sample, descending score); position within each
        # segment is its rank because segment sizes are unchanged
        n = len(self.starts)
        out = np.zeros((n, k))
        order = np.lexsort((-s, self.segment))
        rank = np.arange(len(s)) - np.repeat(self.starts, self.lengths)
        seg_sorted = self.segment[order]
        s_sorted = s[order]
        in_top = rank < k
        out[seg_sorted[in_top], rank[in_top]] = s_sorted[in_top]
        return out

    def build(self, table: TokenScoreTable, mode: str | None = None) -> np.ndarray:
        """Feature matrix for the whole corpus against one score table."""
        mode = self.mode if mode is None else mode
        _check_mode(mode)
        if mode == MODE_S:
            raise ValueError("use build_score_features for the score-only layout")
        s = self._flat_scores(table)

        if mode == MODE_SVW:
            denom = np.add.reduceat(s, self.starts)
            weighted = np.add.reduceat(s[:, None] * self.flat_vecs, self.starts, axis=0)
            safe = denom > 0
            avg = np.where(
                safe[:, None], weighted / np.where(safe, denom, 1.0)[:, None], self.mean_pool
            )
        else:
            avg = self.mean_pool

        if mode == MODE_V:
            top3 = np.zeros((len(self.starts), TOP_SCORES_FULL))
        else:
            top3 = self._top_scores(s, TOP_SCORES_FULL)

        return np.hstack([self.min_pool, self.max_pool, avg, self.counts, top3, self.one_hot])

    def build_score_features(self, table: TokenScoreTable) -> np.ndarray:
        """Score-only layout: top-20 token scores (zero padded) + one-hot."""
        s = self._flat_scores(table)
        return np.hstack([self._top_scores(s, TOP_SCORES_S), self.one_hot])

    def export_csv(self, path: str, table: TokenScoreTable, mode: str | None = None) -> None:
        """Feature matrix as CSV: a header naming each slot, one row per sample."""
        import csv

        mode = self.mode if mode is None else mode
        if mode == MODE_S:
            matrix = self.build_score_features(table)
        else:
            matrix = self.build(table, mode=mode)
        names = feature_names(self.dim, LOLBINS, mode)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id"] + names)
            for sid, row in zip(self.sample_ids, matrix):
                writer.writerow([sid] + [f"{v:.9g}" for v in row])
