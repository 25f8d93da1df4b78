"""Command-line entry points.

    lolal gen-corpus        generate the synthetic labeled corpus + pool
    lolal train-embeddings  unsupervised token-vector training
    lolal feature-eval      cross-validated feature set / embedding benchmark
    lolal simulate          replay the labeling campaign with an oracle
    lolal serve             run the analyst labeling service
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .active_learning import STRATEGIES
from .classifiers import BoostedHyper
from .embeddings import EmbeddingConfig, train_embeddings
from .synth import (
    CorpusSpec,
    generate_corpus,
    run_al_experiment,
    run_feature_eval,
    strip_labels,
)
from .tokenizer import build_vocabulary, normalize, read_corpus, tokenize, write_corpus


def _cmd_gen_corpus(args) -> int:
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as fh:
            spec = CorpusSpec.from_dict(json.load(fh))
    else:
        spec = CorpusSpec()
    if args.seed is not None:
        spec.seed = args.seed
    if args.scale is not None:
        spec.scale = args.scale
    if args.unlabeled is not None:
        spec.unlabeled_size = args.unlabeled

    labeled, pool = generate_corpus(spec)
    write_corpus(args.out, labeled)
    print(f"wrote {len(labeled)} labeled samples to {args.out}")
    if args.unlabeled_out:
        write_corpus(args.unlabeled_out, strip_labels(pool))
        print(f"wrote {len(pool)} pool samples to {args.unlabeled_out}")
    if args.truth_out:
        with open(args.truth_out, "w", encoding="utf-8") as fh:
            json.dump({s.sample_id: s.label for s in pool}, fh)
        print(f"wrote pool ground truth to {args.truth_out}")
    return 0


def _cmd_train_embeddings(args) -> int:
    samples = list(read_corpus(args.infile))
    vocab = build_vocabulary(samples, min_count=args.min_count)
    seqs = [normalize(tokenize(s), vocab) for s in samples]
    config = EmbeddingConfig(
        dim=args.dim, window=args.window, epochs=args.epochs,
        min_count=args.min_count, mode=args.mode, seed=args.seed,
    )
    model = train_embeddings(seqs, config)
    model.save(args.out)
    vocab.save(args.out + ".vocab.json")
    print(
        f"trained {args.mode} embeddings on {len(samples)} samples "
        f"({len(model.tokens)} tokens); probe loss "
        f"{model.probe_losses[0]:.3f} -> {model.probe_losses[-1]:.3f}"
    )
    print(f"model: {args.out}\nvocab: {args.out}.vocab.json")
    return 0


def _cmd_feature_eval(args) -> int:
    labeled = [s for s in read_corpus(args.corpus) if s.label is not None]
    pool = list(read_corpus(args.pool)) if args.pool else None
    config = EmbeddingConfig(epochs=args.epochs, seed=args.seed)
    report = run_feature_eval(
        labeled, folds=args.folds, seed=args.seed,
        embedding_corpus=pool, embedding_config=config,
    )
    os.makedirs(args.out, exist_ok=True)
    report.write_json(os.path.join(args.out, "feature_eval.json"))
    report.write_csv(os.path.join(args.out, "feature_eval.csv"))
    for (emb_mode, feat_mode), summary in report.results.items():
        print(f"{emb_mode:9s} {feat_mode:7s} macro-F1 {summary['macro_f1_mean']:.3f} "
              f"(sd {summary['macro_f1_sd']:.3f})  FPR {summary['macro_fpr_mean']:.3f}")
    for note in report.notes:
        print(f"note: {note}")
    print(f"reports in {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    labeled = [s for s in read_corpus(args.corpus) if s.label is not None]
    pool = list(read_corpus(args.pool)) if args.pool else None
    strategies = list(STRATEGIES) if args.strategy == "all" else [args.strategy]
    os.makedirs(args.out, exist_ok=True)
    state_dir = os.path.join(args.out, "states")
    os.makedirs(state_dir, exist_ok=True)
    report = run_al_experiment(
        labeled,
        strategies=strategies,
        iterations=args.iters,
        batch_size=args.batch,
        seed_label_count=args.seed_labels,
        runs=args.runs,
        seed=args.seed,
        embedding_corpus=pool,
        embedding_config=EmbeddingConfig(mode=args.embedding_mode, epochs=args.epochs, seed=args.seed),
        boosted_hyper=BoostedHyper(
            n_stages=args.stages, max_depth=args.depth, learning_rate=args.lr,
        ),
        checkpoint_dir=state_dir,
    )
    report.write(args.out)
    for strategy in strategies:
        mean, sd = report.curve(strategy, "macro.f1")
        marks = {i: f"{mean[i]:.3f}" for i in (5, 10, 20, 30) if i < len(mean)}
        print(f"{strategy:12s} macro-F1 {marks} final {mean[-1]:.3f}")
    print(f"results in {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import SessionConfig, SessionStore, create_app

    store = SessionStore(
        args.state, args.corpus, args.pool,
        default_config=SessionConfig(
            k_uncertain=args.k_uncertain, k_anomalous=args.k_anomalous,
            embedding_epochs=args.epochs, seed=args.seed,
        ),
    )
    app = create_app(store)
    print(f"serving on http://{args.host}:{args.port} (state: {args.state})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lolal")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic labeled corpus")
    p.add_argument("--spec", help="corpus spec JSON file")
    p.add_argument("--out", required=True, help="labeled corpus JSONL path")
    p.add_argument("--unlabeled-out", help="unlabeled pool JSONL path")
    p.add_argument("--truth-out", help="pool ground-truth JSON path")
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", type=float)
    p.add_argument("--unlabeled", type=int, help="pool size")
    p.set_defaults(func=_cmd_gen_corpus)

    p = sub.add_parser("train-embeddings", help="train token embeddings")
    p.add_argument("--mode", choices=["word2vec", "fasttext"], default="fasttext")
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="infile", required=True, help="corpus JSONL")
    p.add_argument("--out", required=True, help="model output path")
    p.set_defaults(func=_cmd_train_embeddings)

    p = sub.add_parser("feature-eval", help="cross-validated feature benchmark")
    p.add_argument("--corpus", required=True)
    p.add_argument("--pool", help="extra unlabeled corpus for embedding training")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=_cmd_feature_eval)

    p = sub.add_parser("simulate", help="replay the labeling campaign with an oracle")
    p.add_argument("--strategy", default="lolal", choices=list(STRATEGIES) + ["all"])
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--batch", type=int, default=5)
    p.add_argument("--seed-labels", type=int, default=10)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corpus", required=True)
    p.add_argument("--pool", help="extra unlabeled corpus for embedding training")
    p.add_argument("--embedding-mode", choices=["word2vec", "fasttext"], default="fasttext")
    p.add_argument("--epochs", type=int, default=20, help="embedding epochs")
    p.add_argument("--stages", type=int, default=40, help="boosting stages")
    p.add_argument("--depth", type=int, default=3, help="boosting tree depth")
    p.add_argument("--lr", type=float, default=0.3, help="boosting learning rate")
    p.add_argument("--out", required=True, help="results directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("serve", help="run the analyst labeling service")
    p.add_argument("--corpus", required=True, help="labeled bootstrap corpus JSONL")
    p.add_argument("--pool", help="unlabeled pool JSONL (labels ignored)")
    p.add_argument("--state", required=True, help="session state directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--k-uncertain", type=int, default=25)
    p.add_argument("--k-anomalous", type=int, default=25)
    p.add_argument("--epochs", type=int, default=20, help="embedding epochs")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
