#!/usr/bin/env python3
# Cross-validated comparison of the four feature sets (S, V, S+V, S+V(W))
# under both embedding modes, with a 20-tree random forest. Scaled down
# from the full corpus so it finishes in a couple of minutes; pass
# --full for the complete run.

import sys

from lolal.embeddings import EmbeddingConfig
from lolal.synth import CorpusSpec, generate_corpus, run_feature_eval

full = "--full" in sys.argv
scale = 1.0 if full else 0.3
folds = 10 if full else 5
epochs = 20 if full else 8

labeled, pool = generate_corpus(CorpusSpec(seed=2, scale=scale, unlabeled_size=1000))
print(f"corpus: {len(labeled)} labeled samples (scale {scale}), {folds}-fold CV")

report = run_feature_eval(
    labeled,
    folds=folds,
    seed=2,
    embedding_corpus=pool,
    embedding_config=EmbeddingConfig(epochs=epochs, seed=2),
)

print(f"\n{'embedding':10s} {'features':8s} {'F1':>6s} {'sd':>6s} {'FPR':>6s}")
print("-" * 42)
for (emb_mode, feat_mode), s in report.results.items():
    print(f"{emb_mode:10s} {feat_mode:8s} {s['macro_f1_mean']:6.3f} "
          f"{s['macro_f1_sd']:6.3f} {s['macro_fpr_mean']:6.3f}")
for note in report.notes:
    print("note:", note)

report.write_csv("feature_eval.csv")
report.write_json("feature_eval.json")
print("\nreports written to feature_eval.csv / feature_eval.json")
