"""Token embeddings trained with skip-gram and negative sampling.

Two modes are supported. Plain word2vec keeps one input vector per token;
out-of-dictionary tokens fall back to the rare token's vector. The
fasttext-style subword mode additionally trains character n-gram vectors
and represents a token as the mean of its whole-token vector and its known
n-gram vectors, which lets unseen tokens be vectorized from their n-grams.

Training is an offline, unsupervised pass over normalized token sequences.
The SGD inner loops are numba kernels for speed; the per-triple loss and
gradient are also implemented in plain numpy (``sgns_loss`` /
``sgns_grads``) as the reference the kernels are checked against.

The objective for one (center, context, negatives) triple is

    L = -log s(u_o . v_c) - sum_n log s(-u_n . v_c)

where v_c is the (possibly composed) center vector, u are output vectors
and s is the logistic sigmoid. Negatives are drawn from the unigram
distribution raised to 3/4. The learning rate decays linearly over the
whole run. With a fixed seed the single-threaded run is bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .tokenizer import NUMBER, RARE, SEP, TokenSequence, _atomic_write_json

SPECIAL_TOKENS = (RARE, NUMBER, SEP)

WORD2VEC = "word2vec"
FASTTEXT = "fasttext"


@dataclass
class EmbeddingConfig:
    dim: int = 16
    window: int = 5
    epochs: int = 20
    min_count: int = 5
    negative_samples: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    mode: str = WORD2VEC
    ngram_min: int = 3
    ngram_max: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.mode not in (WORD2VEC, FASTTEXT):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == FASTTEXT and self.ngram_min > self.ngram_max:
            raise ValueError("ngram_min must be <= ngram_max")


def token_ngrams(token: str, nmin: int = 3, nmax: int = 6) -> list[str]:
    """Character n-grams of a token, with < and > boundary markers.

    The fully marked token itself is excluded (its whole-token vector is a
    separate component), and the reserved special tokens are atomic.
    """
    if token in SPECIAL_TOKENS:
        return []
    marked = "<" + token + ">"
    out = []
    for n in range(nmin, nmax + 1):
        for i in range(len(marked) - n + 1):
            gram = marked[i : i + n]
            if gram != marked:
                out.append(gram)
    return out


# ---------------------------------------------------------------------------
# reference math (numpy)


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _log_sigmoid(x):
    # -log(1 + exp(-x)) computed without overflow on either side
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = -np.log1p(np.exp(-x[pos]))
    out[~pos] = x[~pos] - np.log1p(np.exp(x[~pos]))
    return out


def sgns_loss(v_c: np.ndarray, u_o: np.ndarray, u_neg: np.ndarray) -> float:
    """Negative-sampling loss of one (center, context, negatives) triple."""
    pos = float(np.dot(u_o, v_c))
    neg = np.asarray(u_neg) @ v_c
    return float(-_log_sigmoid(pos) - np.sum(_log_sigmoid(-neg)))


def sgns_grads(v_c, u_o, u_neg):
    """Analytic gradients of ``sgns_loss`` wrt v_c, u_o and each negative."""
    u_neg = np.asarray(u_neg)
    g_pos = float(_sigmoid(np.dot(u_o, v_c))) - 1.0
    g_neg = _sigmoid(u_neg @ v_c)
    d_v = g_pos * u_o + g_neg @ u_neg
    d_uo = g_pos * v_c
    d_uneg = g_neg[:, None] * v_c[None, :]
    return d_v, d_uo, d_uneg


def composed_center(components: np.ndarray) -> np.ndarray:
    """Center vector in subword mode: the mean of the component vectors."""
    return np.asarray(components).mean(axis=0)


# ---------------------------------------------------------------------------
# numba kernels

U64 = np.uint64
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _next_u64(state):
    state = state + U64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    z = z ^ (z >> U64(31))
    return state, z


@njit(cache=True, inline="always")
def _sigmoid_s(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, inline="always")
def _log_sigmoid_s(x):
    if x >= 0.0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True)
def _probe_loss_w2v(w_in, w_out, centers, contexts, negs):
    total = 0.0
    dim = w_in.shape[1]
    for p in range(centers.shape[0]):
        c = centers[p]
        o = contexts[p]
        dot = 0.0
        for d in range(dim):
            dot += w_in[c, d] * w_out[o, d]
        total -= _log_sigmoid_s(dot)
        for n in range(negs.shape[1]):
            t = negs[p, n]
            dot = 0.0
            for d in range(dim):
                dot += w_in[c, d] * w_out[t, d]
            total -= _log_sigmoid_s(-dot)
    return total / centers.shape[0]


@njit(cache=True)
def _probe_loss_ft(w_in, w_grams, gram_idx, gram_ptr, w_out, centers, contexts, negs):
    total = 0.0
    dim = w_in.shape[1]
    v = np.empty(dim)
    for p in range(centers.shape[0]):
        c = centers[p]
        o = contexts[p]
        m = 1.0 + (gram_ptr[c + 1] - gram_ptr[c])
        for d in range(dim):
            v[d] = w_in[c, d]
        for gi in range(gram_ptr[c], gram_ptr[c + 1]):
            g = gram_idx[gi]
            for d in range(dim):
                v[d] += w_grams[g, d]
        for d in range(dim):
            v[d] /= m
        dot = 0.0
        for d in range(dim):
            dot += v[d] * w_out[o, d]
        total -= _log_sigmoid_s(dot)
        for n in range(negs.shape[1]):
            t = negs[p, n]
            dot = 0.0
            for d in range(dim):
                dot += v[d] * w_out[t, d]
            total -= _log_sigmoid_s(-dot)
    return total / centers.shape[0]


@njit(cache=True)
def _train_w2v(w_in, w_out, centers, contexts, cum, epochs, k_neg, lr0, lr_min,
               seed, probe_c, probe_o, probe_negs, losses_out):
    n_pairs = centers.shape[0]
    dim = w_in.shape[1]
    total_w = cum[cum.shape[0] - 1]
    total_steps = n_pairs * epochs
    denom = total_steps - 1 if total_steps > 1 else 1
    state = seed * U64(2654435761) + U64(0x1234ABCD)
    dv = np.empty(dim)
    step = 0
    losses_out[0] = _probe_loss_w2v(w_in, w_out, probe_c, probe_o, probe_negs)
    for ep in range(epochs):
        for p in range(n_pairs):
            lr = lr0 + (lr_min - lr0) * (step / denom)
            c = centers[p]
            o = contexts[p]
            dot = 0.0
            for d in range(dim):
                dot += w_in[c, d] * w_out[o, d]
            g = _sigmoid_s(dot) - 1.0
            for d in range(dim):
                dv[d] = g * w_out[o, d]
                w_out[o, d] -= lr * g * w_in[c, d]
            for _n in range(k_neg):
                state, z = _next_u64(state)
                u = (z >> U64(11)) * _INV53
                t = np.searchsorted(cum, u * total_w, side="right")
                if t == o:
                    continue
                dot = 0.0
                for d in range(dim):
                    dot += w_in[c, d] * w_out[t, d]
                gn = _sigmoid_s(dot)
                for d in range(dim):
                    dv[d] += gn * w_out[t, d]
                    w_out[t, d] -= lr * gn * w_in[c, d]
            for d in range(dim):
                w_in[c, d] -= lr * dv[d]
            step += 1
        losses_out[ep + 1] = _probe_loss_w2v(w_in, w_out, probe_c, probe_o, probe_negs)


@njit(cache=True)
def _train_ft(w_in, w_grams, gram_idx, gram_ptr, w_out, centers, contexts, cum,
              epochs, k_neg, lr0, lr_min, seed, probe_c, probe_o, probe_negs,
              losses_out):
    n_pairs = centers.shape[0]
    dim = w_in.shape[1]
    total_w = cum[cum.shape[0] - 1]
    total_steps = n_pairs * epochs
    denom = total_steps - 1 if total_steps > 1 else 1
    state = seed * U64(2654435761) + U64(0x1234ABCD)
    dv = np.empty(dim)
    v = np.empty(dim)
    step = 0
    losses_out[0] = _probe_loss_ft(
        w_in, w_grams, gram_idx, gram_ptr, w_out, probe_c, probe_o, probe_negs)
    for ep in range(epochs):
        for p in range(n_pairs):
            lr = lr0 + (lr_min - lr0) * (step / denom)
            c = centers[p]
            o = contexts[p]
            lo = gram_ptr[c]
            hi = gram_ptr[c + 1]
            m = 1.0 + (hi - lo)
            for d in range(dim):
                v[d] = w_in[c, d]
            for gi in range(lo, hi):
                g = gram_idx[gi]
                for d in range(dim):
                    v[d] += w_grams[g, d]
            for d in range(dim):
                v[d] /= m
            dot = 0.0
            for d in range(dim):
                dot += v[d] * w_out[o, d]
            g0 = _sigmoid_s(dot) - 1.0
            for d in range(dim):
                dv[d] = g0 * w_out[o, d]
                w_out[o, d] -= lr * g0 * v[d]
            for _n in range(k_neg):
                state, z = _next_u64(state)
                u = (z >> U64(11)) * _INV53
                t = np.searchsorted(cum, u * total_w, side="right")
                if t == o:
                    continue
                dot = 0.0
                for d in range(dim):
                    dot += v[d] * w_out[t, d]
                gn = _sigmoid_s(dot)
                for d in range(dim):
                    dv[d] += gn * w_out[t, d]
                    w_out[t, d] -= lr * gn * v[d]
            share = 1.0 / m
            for d in range(dim):
                w_in[c, d] -= lr * dv[d] * share
            for gi in range(lo, hi):
                g = gram_idx[gi]
                for d in range(dim):
                    w_grams[g, d] -= lr * dv[d] * share
            step += 1
        losses_out[ep + 1] = _probe_loss_ft(
            w_in, w_grams, gram_idx, gram_ptr, w_out, probe_c, probe_o, probe_negs)


# ---------------------------------------------------------------------------
# model


@dataclass
class EmbeddingModel:
    """Trained token vectors with optional character n-gram vectors."""

    config: EmbeddingConfig
    tokens: list[str]
    vectors: np.ndarray  # (V, dim) input vectors, the embeddings
    ngram_tokens: list[str] = field(default_factory=list)
    ngram_vectors: np.ndarray | None = None
    probe_losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.token_index = {t: i for i, t in enumerate(self.tokens)}
        self.ngram_index = {g: i for i, g in enumerate(self.ngram_tokens)}

    @property
    def dim(self) -> int:
        return self.config.dim

    def lookup(self, token: str) -> np.ndarray:
        """Vector for a token, with the mode's out-of-dictionary fallback."""
        idx = self.token_index.get(token)
        if self.config.mode == WORD2VEC:
            if idx is None:
                idx = self.token_index[RARE]
            return self.vectors[idx]
        comps = []
        if idx is not None:
            comps.append(self.vectors[idx])
        for gram in token_ngrams(token, self.config.ngram_min, self.config.ngram_max):
            gi = self.ngram_index.get(gram)
            if gi is not None:
                comps.append(self.ngram_vectors[gi])
        if not comps:
            return np.zeros(self.dim)
        return np.mean(comps, axis=0)

    def matrix_for(self, tokens: Sequence[str]) -> np.ndarray:
        """Stacked lookup, one row per token."""
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self.lookup(t) for t in tokens])

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "kind": "embedding",
            "config": asdict(self.config),
            "tokens": self.tokens,
            "vectors": self.vectors.tolist(),
            "ngram_tokens": self.ngram_tokens,
            "ngram_vectors": (
                self.ngram_vectors.tolist() if self.ngram_vectors is not None else None
            ),
            "probe_losses": list(self.probe_losses),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "EmbeddingModel":
        if payload.get("version") != 1 or payload.get("kind") != "embedding":
            raise ValueError("unsupported embedding model file")
        config = EmbeddingConfig(**payload["config"])
        ngram_vecs = payload.get("ngram_vectors")
        if ngram_vecs is not None:
            ngram_vecs = np.asarray(ngram_vecs, dtype=np.float64).reshape(-1, config.dim)
        return cls(
            config=config,
            tokens=list(payload["tokens"]),
            vectors=np.asarray(payload["vectors"], dtype=np.float64),
            ngram_tokens=list(payload.get("ngram_tokens", [])),
            ngram_vectors=ngram_vecs,
            probe_losses=list(payload.get("probe_losses", [])),
        )

    def save(self, path: str) -> None:
        _atomic_write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str) -> "EmbeddingModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _coerce_sequences(corpus) -> list[list[str]]:
    seqs = []
    for item in corpus:
        if isinstance(item, TokenSequence):
            seqs.append(item.tokens)
        else:
            seqs.append(list(item))
    return seqs


def _context_pairs(seqs: list[list[int]], window: int) -> tuple[np.ndarray, np.ndarray]:
    centers, contexts = [], []
    for seq in seqs:
        n = len(seq)
        if n < 2:
            continue
        arr = np.asarray(seq, dtype=np.int32)
        for off in range(1, window + 1):
            if off >= n:
                break
            centers.append(arr[:-off])
            contexts.append(arr[off:])
            centers.append(arr[off:])
            contexts.append(arr[:-off])
    if not centers:
        return np.empty(0, dtype=np.int32), np.empty(0, dtype=np.int32)
    return np.concatenate(centers), np.concatenate(contexts)


def train_embeddings(corpus: Iterable, config: EmbeddingConfig) -> EmbeddingModel:
    """Train token (and, in subword mode, n-gram) vectors on a token corpus.

    The corpus is expected to be normalized already, so every token it
    contains belongs to the dictionary. The reserved special tokens always
    receive vectors even when the corpus never produced them.
    """
    seqs = _coerce_sequences(corpus)

    tokens: list[str] = []
    index: dict[str, int] = {}
    freq: list[int] = []
    encoded: list[list[int]] = []
    for seq in seqs:
        row = []
        for tok in seq:
            i = index.get(tok)
            if i is None:
                i = len(tokens)
                index[tok] = i
                tokens.append(tok)
                freq.append(0)
            freq[i] += 1
            row.append(i)
        encoded.append(row)
    for special in SPECIAL_TOKENS:
        if special not in index:
            index[special] = len(tokens)
            tokens.append(special)
            freq.append(0)

    centers, contexts = _context_pairs(encoded, config.window)
    if centers.shape[0] == 0:
        raise ValueError("no context pairs")

    vocab_size = len(tokens)
    rng = np.random.default_rng(config.seed)
    w_in = rng.uniform(-0.5, 0.5, size=(vocab_size, config.dim)) / config.dim
    w_out = np.zeros((vocab_size, config.dim))

    weights = np.asarray(freq, dtype=np.float64) ** 0.75
    if weights.sum() == 0:
        weights[:] = 1.0
    cum = np.cumsum(weights)

    # fixed probe batch used to monitor the objective between epochs
    n_probe = min(2048, centers.shape[0])
    probe_c = centers[:n_probe].copy()
    probe_o = contexts[:n_probe].copy()
    probe_negs = rng.integers(
        0, vocab_size, size=(n_probe, max(config.negative_samples, 1))
    ).astype(np.int32)

    losses = np.zeros(config.epochs + 1)
    seed_u64 = np.uint64(config.seed & 0xFFFFFFFFFFFFFFFF)
    if config.mode == WORD2VEC:
        _train_w2v(
            w_in, w_out, centers, contexts, cum, config.epochs,
            config.negative_samples, config.learning_rate,
            config.min_learning_rate, seed_u64, probe_c, probe_o, probe_negs,
            losses,
        )
        return EmbeddingModel(
            config=config, tokens=tokens, vectors=w_in, probe_losses=losses.tolist()
        )

    gram_index: dict[str, int] = {}
    gram_lists: list[list[int]] = []
    for tok in tokens:
        ids = []
        for gram in token_ngrams(tok, config.ngram_min, config.ngram_max):
            gi = gram_index.get(gram)
            if gi is None:
                gi = len(gram_index)
                gram_index[gram] = gi
            ids.append(gi)
        gram_lists.append(ids)
    gram_ptr = np.zeros(vocab_size + 1, dtype=np.int64)
    for i, ids in enumerate(gram_lists):
        gram_ptr[i + 1] = gram_ptr[i] + len(ids)
    gram_idx = np.empty(int(gram_ptr[-1]), dtype=np.int32)
    for i, ids in enumerate(gram_lists):
        gram_idx[gram_ptr[i] : gram_ptr[i + 1]] = ids
    n_grams = len(gram_index)
    w_grams = rng.uniform(-0.5, 0.5, size=(max(n_grams, 1), config.dim)) / config.dim

    _train_ft(
        w_in, w_grams, gram_idx, gram_ptr, w_out, centers, contexts, cum,
        config.epochs, config.negative_samples, config.learning_rate,
        config.min_learning_rate, seed_u64, probe_c, probe_o, probe_negs,
        losses,
    )

    ngram_tokens = [g for g, _ in sorted(gram_index.items(), key=lambda kv: kv[1])]
    return EmbeddingModel(
        config=config,
        tokens=tokens,
        vectors=w_in,
        ngram_tokens=ngram_tokens,
        ngram_vectors=w_grams[:n_grams] if n_grams else np.zeros((0, config.dim)),
        probe_losses=losses.tolist(),
    )
