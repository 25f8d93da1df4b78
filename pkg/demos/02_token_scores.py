#!/usr/bin/env python3
# Score every (token, binary) pair observed in labeled data with the token
# forest, then inspect the most and least suspicious tokens, the same view
# an analyst would use to understand what the model keys on.

from lolal.embeddings import EmbeddingConfig, train_embeddings
from lolal.synth import CorpusSpec, generate_corpus
from lolal.token_scores import build_score_table
from lolal.tokenizer import build_vocabulary, normalize, tokenize

labeled, pool = generate_corpus(CorpusSpec(seed=1, scale=0.5, unlabeled_size=500))
vocab = build_vocabulary(labeled + pool, min_count=5)
seqs = [normalize(tokenize(s), vocab) for s in labeled + pool]
emb = train_embeddings(seqs, EmbeddingConfig(mode="fasttext", epochs=10, seed=1))

table = build_score_table(labeled, emb, vocab, n_trees=20, seed=1)
print(f"score table: {len(table)} (token, binary) pairs\n")

ranked = sorted(table.scores.items(), key=lambda kv: (-kv[1], kv[0]))
print(f"{'token':24s} {'binary':10s} score")
print("-" * 44)
for (token, lolbin), score in ranked[:12]:
    print(f"{token:24s} {lolbin:10s} {score:.3f}")
print("...")
for (token, lolbin), score in ranked[-12:]:
    print(f"{token:24s} {lolbin:10s} {score:.3f}")

# the same token can mean different things under different binaries
print("\nper-binary contrast for 'download':")
for lolbin in ("Bitsadmin", "Certutil", "Msiexec"):
    print(f"  {lolbin:10s} {table.lookup('download', lolbin):.3f}")

table.write_csv("token_scores.csv")
print("\nfull table exported to token_scores.csv")
