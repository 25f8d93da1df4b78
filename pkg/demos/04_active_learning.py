#!/usr/bin/env python3
# Replay the labeling campaign under all five sampling strategies and
# compare their learning curves: 10 starting labels, 5 labels per
# iteration, a perfect oracle standing in for the analyst. Scaled down by
# default; pass --full for 5 runs x 50 iterations on the full corpus.

import sys

from lolal.active_learning import STRATEGIES
from lolal.classifiers import BoostedHyper
from lolal.embeddings import EmbeddingConfig
from lolal.synth import CorpusSpec, generate_corpus, run_al_experiment

full = "--full" in sys.argv
scale = 1.0 if full else 0.4
iterations = 50 if full else 20
runs = 5 if full else 2

labeled, pool = generate_corpus(CorpusSpec(seed=3, scale=scale, unlabeled_size=1200))
print(f"corpus: {len(labeled)} samples; {runs} runs x {iterations} iterations, batch 5")

report = run_al_experiment(
    labeled,
    strategies=STRATEGIES,
    iterations=iterations,
    batch_size=5,
    seed_label_count=10,
    runs=runs,
    seed=3,
    embedding_corpus=pool,
    embedding_config=EmbeddingConfig(mode="fasttext", epochs=10, seed=3),
    boosted_hyper=BoostedHyper(n_stages=40, max_depth=3, learning_rate=0.3),
)

marks = [i for i in (0, 5, 10, 15, 20, 30, 50) if i <= iterations]
header = "  ".join(f"it{i:>3d}" for i in marks)
print(f"\nmacro F1 (mean of {runs} runs)")
print(f"{'strategy':14s} {header}")
print("-" * (16 + 7 * len(marks)))
for strategy in STRATEGIES:
    mean, _ = report.curve(strategy, "macro.f1")
    row = "  ".join(f"{mean[i]:5.3f}" for i in marks)
    print(f"{strategy:14s} {row}")

report.write("al_results")
print("\ncurves and per-class snapshots written to al_results/")
