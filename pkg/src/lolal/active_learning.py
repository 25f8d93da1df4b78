"""The analyst-in-the-loop training loop.

Each iteration: fit the multi-class classifier on the labeled pool, score
every unlabeled sample's uncertainty (top-two posterior margin), assign
unlabeled samples to their most likely class and fit the per-class
naive-Bayes density, score anomalies, rank candidates, present a batch for
labeling, fold the new labels back in and refresh the token score table.

Ranking alternates per class: every round emits the most uncertain
unselected sample predicted in each class, then the most anomalous one in
each class, so the analyst sees both kinds of evidence for every class
instead of only the most prevalent one. Classes with no remaining
candidates are skipped, and nothing is ever presented twice.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .anomaly import NaiveBayesModel, anomaly_scores, fit_nb
from .classifiers import (
    BoostedHyper,
    LogisticHyper,
    compute_metrics,
    fit_boosted,
    fit_logistic,
)
from .embeddings import EmbeddingModel
from .featurize import MODE_SVW, FeatureMatrixBuilder
from .token_scores import TokenScoreTable, build_score_table
from .tokenizer import CLASSES, RawSample, Vocabulary, _atomic_write_json

LOLAL = "lolal"
LOLAL_LR = "lolal-lr"
UNCERTAINTY_ONLY = "uncertainty"
ANOMALY_ONLY = "anomaly"
RANDOM = "random"
STRATEGIES = (LOLAL, LOLAL_LR, UNCERTAINTY_ONLY, ANOMALY_ONLY, RANDOM)

REASON_UNCERTAIN = "uncertain"
REASON_ANOMALOUS = "anomalous"


def uncertainty_score(posterior) -> float:
    """Margin-based uncertainty: minus the gap between the two largest
    posterior probabilities. Ranges over [-1, 0]; 0 means a dead heat."""
    if isinstance(posterior, dict):
        values = np.asarray(list(posterior.values()), dtype=np.float64)
    else:
        values = np.asarray(posterior, dtype=np.float64)
    if values.size < 2:
        raise ValueError("uncertainty needs at least 2 classes")
    top_two = np.sort(values)[-2:]
    return float(top_two[0] - top_two[1])


def uncertainty_scores(probs: np.ndarray) -> np.ndarray:
    """Row-wise version of :func:`uncertainty_score`."""
    probs = np.atleast_2d(probs)
    if probs.shape[1] < 2:
        raise ValueError("uncertainty needs at least 2 classes")
    part = np.sort(probs, axis=1)
    return part[:, -2] - part[:, -1]


@dataclass(frozen=True)
class ScoredSample:
    sample_id: str
    predicted_class: str
    uncertainty: float
    anomaly: float


@dataclass(frozen=True)
class QueueEntry:
    sample_id: str
    reason: str
    predicted_class: str
    uncertainty: float
    anomaly: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "QueueEntry":
        return cls(**payload)


def _entry(sample: ScoredSample, reason: str) -> QueueEntry:
    return QueueEntry(
        sample_id=sample.sample_id,
        reason=reason,
        predicted_class=sample.predicted_class,
        uncertainty=sample.uncertainty,
        anomaly=sample.anomaly,
    )


def _per_class_rankings(scored, class_order, key):
    pools: dict[str, list[ScoredSample]] = {c: [] for c in class_order}
    for s in scored:
        pools[s.predicted_class].append(s)
    for c in class_order:
        # highest score first, ties resolved by sample id for determinism
        pools[c].sort(key=lambda s: (-key(s), s.sample_id))
    return pools


def rank_round_robin(
    scored: Sequence[ScoredSample],
    class_order: Sequence[str] = CLASSES,
    first_reason: str = REASON_UNCERTAIN,
) -> list[QueueEntry]:
    """Full ranking of the pool: per round, the most uncertain candidate of
    each class in order, then the most anomalous one of each class.

    A sample already taken this round (or any earlier round) is skipped, so
    the anomalous slot falls to the next most anomalous candidate. The
    result is a permutation of the input. ``first_reason`` flips which
    reason opens each round; the default matches the documented ordering.
    """
    unc = _per_class_rankings(scored, class_order, lambda s: s.uncertainty)
    ano = _per_class_rankings(scored, class_order, lambda s: s.anomaly)
    cursor_unc = {c: 0 for c in class_order}
    cursor_ano = {c: 0 for c in class_order}
    taken: set[str] = set()
    queue: list[QueueEntry] = []
    total = len(scored)
    reasons = [
        (REASON_UNCERTAIN, unc, cursor_unc),
        (REASON_ANOMALOUS, ano, cursor_ano),
    ]
    if first_reason == REASON_ANOMALOUS:
        reasons.reverse()
    elif first_reason != REASON_UNCERTAIN:
        raise ValueError(f"unknown reason {first_reason!r}")
    while len(queue) < total:
        for reason, pools, cursors in reasons:
            for c in class_order:
                pool = pools[c]
                i = cursors[c]
                while i < len(pool) and pool[i].sample_id in taken:
                    i += 1
                cursors[c] = i
                if i < len(pool):
                    sample = pool[i]
                    taken.add(sample.sample_id)
                    cursors[c] = i + 1
                    queue.append(_entry(sample, reason))
    return queue


def _rank_single_reason(scored, class_order, reason) -> list[QueueEntry]:
    key = (lambda s: s.uncertainty) if reason == REASON_UNCERTAIN else (lambda s: s.anomaly)
    pools = _per_class_rankings(scored, class_order, key)
    cursors = {c: 0 for c in class_order}
    queue: list[QueueEntry] = []
    total = len(scored)
    while len(queue) < total:
        for c in class_order:
            pool = pools[c]
            i = cursors[c]
            if i < len(pool):
                queue.append(_entry(pool[i], reason))
                cursors[c] = i + 1
    return queue


def select_batch(
    scored: Sequence[ScoredSample],
    strategy: str,
    batch_size: int,
    rng: np.random.Generator | None = None,
    class_order: Sequence[str] = CLASSES,
) -> list[QueueEntry]:
    """Choose the next samples to label under a sampling strategy.

    Returns at most ``batch_size`` entries; fewer when the pool is smaller.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if strategy in (LOLAL, LOLAL_LR):
        return rank_round_robin(scored, class_order)[:batch_size]
    if strategy == UNCERTAINTY_ONLY:
        return _rank_single_reason(scored, class_order, REASON_UNCERTAIN)[:batch_size]
    if strategy == ANOMALY_ONLY:
        return _rank_single_reason(scored, class_order, REASON_ANOMALOUS)[:batch_size]
    if strategy == RANDOM:
        if rng is None:
            raise ValueError("random strategy needs a generator")
        order = rng.permutation(len(scored))[:batch_size]
        return [_entry(scored[i], "random") for i in order]
    raise ValueError(f"unknown strategy {strategy!r}")


@dataclass
class IterationState:
    """Everything the loop carries between iterations."""

    iteration: int = 0
    labeled: dict = field(default_factory=dict)  # sample_id -> label
    unlabeled: list = field(default_factory=list)  # sample ids, stable order
    pending: list = field(default_factory=list)  # presented, awaiting labels
    presented: set = field(default_factory=set)
    queue: list = field(default_factory=list)  # list[QueueEntry]
    metrics_history: list = field(default_factory=list)
    seed: int = 0
    strategy: str = LOLAL
    score_table: Optional[TokenScoreTable] = None
    nb: Optional[NaiveBayesModel] = None

    def check_invariants(self) -> None:
        overlap = set(self.labeled) & set(self.unlabeled)
        if overlap:
            raise AssertionError(f"labeled and unlabeled overlap: {sorted(overlap)[:3]}")
        ids = [e.sample_id for e in self.queue]
        if len(ids) != len(set(ids)):
            raise AssertionError("duplicate queue entries")
        if set(ids) & set(self.labeled):
            raise AssertionError("labeled sample in queue")

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "kind": "iteration_state",
            "iteration": self.iteration,
            "labeled": dict(self.labeled),
            "unlabeled": list(self.unlabeled),
            "pending": list(self.pending),
            "presented": sorted(self.presented),
            "queue": [e.to_dict() for e in self.queue],
            "metrics_history": self.metrics_history,
            "seed": self.seed,
            "strategy": self.strategy,
            "score_table": self.score_table.to_dict() if self.score_table else None,
            "naive_bayes": self.nb.to_dict() if self.nb else None,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "IterationState":
        if payload.get("version") != 1 or payload.get("kind") != "iteration_state":
            raise ValueError("unsupported iteration state file")
        return cls(
            iteration=payload["iteration"],
            labeled=dict(payload["labeled"]),
            unlabeled=list(payload["unlabeled"]),
            pending=list(payload["pending"]),
            presented=set(payload["presented"]),
            queue=[QueueEntry.from_dict(e) for e in payload["queue"]],
            metrics_history=list(payload["metrics_history"]),
            seed=payload["seed"],
            strategy=payload["strategy"],
            score_table=(
                TokenScoreTable.from_dict(payload["score_table"])
                if payload.get("score_table")
                else None
            ),
            nb=(
                NaiveBayesModel.from_dict(payload["naive_bayes"])
                if payload.get("naive_bayes")
                else None
            ),
        )

    def save(self, path: str) -> None:
        _atomic_write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str) -> "IterationState":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class ActiveLearningLoop:
    """Drives the iterate/label/retrain cycle over a fixed sample pool.

    ``truth`` (sample_id -> label) is only consulted for the per-iteration
    evaluation over the unlabeled remainder; the loop itself never reads a
    pool sample's label field.
    """

    def __init__(
        self,
        samples: Sequence[RawSample],
        seed_labels: dict,
        emb: EmbeddingModel,
        vocab: Vocabulary,
        strategy: str = LOLAL,
        seed: int = 0,
        boosted_hyper: BoostedHyper | None = None,
        logistic_hyper: LogisticHyper | None = None,
        score_trees: int = 20,
        truth: dict | None = None,
        class_order: Sequence[str] = CLASSES,
        state: IterationState | None = None,
    ):
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {strategy!r}")
        self.samples = {s.sample_id: s for s in samples}
        if len(self.samples) != len(samples):
            raise ValueError("duplicate sample ids")
        unknown = set(seed_labels) - set(self.samples)
        if unknown:
            raise ValueError(f"seed labels for unknown samples: {sorted(unknown)[:3]}")
        self.order = [s.sample_id for s in samples]
        self.row_of = {sid: i for i, sid in enumerate(self.order)}
        self.builder = FeatureMatrixBuilder(samples, emb, vocab, mode=MODE_SVW)
        self.emb = emb
        self.vocab = vocab
        self.boosted_hyper = boosted_hyper or BoostedHyper()
        self.logistic_hyper = logistic_hyper or LogisticHyper()
        self.score_trees = score_trees
        self.truth = dict(truth) if truth else None
        self.class_order = list(class_order)
        self.classifier = None

        if state is not None:
            self.state = state
        else:
            self.state = IterationState(
                labeled=dict(seed_labels),
                unlabeled=[sid for sid in self.order if sid not in seed_labels],
                presented=set(seed_labels),
                seed=seed,
                strategy=strategy,
            )
            self.state.score_table = self._rebuild_score_table()

    # -- internals ---------------------------------------------------------

    def _labeled_samples(self) -> list[RawSample]:
        return [
            dataclasses.replace(self.samples[sid], label=lbl)
            for sid, lbl in sorted(self.state.labeled.items())
        ]

    def _rebuild_score_table(self) -> TokenScoreTable:
        # with only one side labeled (all benign or all malicious) the token
        # forest is degenerate; every pair keeps the uninformative default
        try:
            return build_score_table(
                self._labeled_samples(), self.emb, self.vocab,
                n_trees=self.score_trees, seed=self.state.seed,
            )
        except ValueError:
            return TokenScoreTable()

    def _fit_classifier(self, features: np.ndarray):
        rows = [self.row_of[sid] for sid in sorted(self.state.labeled)]
        X = features[rows]
        y = [self.state.labeled[sid] for sid in sorted(self.state.labeled)]
        if len(set(y)) < 2:
            raise ValueError("labeled pool must cover at least 2 classes")
        if self.state.strategy == LOLAL_LR:
            return fit_logistic(X, y, self.logistic_hyper)
        return fit_boosted(X, y, self.boosted_hyper)

    def _score_pool(self, classifier, features) -> list[ScoredSample]:
        candidates = [sid for sid in self.state.unlabeled if sid not in set(self.state.pending)]
        if not candidates:
            return []
        rows = np.asarray([self.row_of[sid] for sid in candidates])
        probs = classifier.predict_proba(features[rows])
        unc = uncertainty_scores(probs) if probs.shape[1] >= 2 else np.zeros(len(rows))
        pred_idx = probs.argmax(axis=1)
        pred = [classifier.classes[i] for i in pred_idx]

        groups: dict[str, list[int]] = {}
        for i, cls in enumerate(pred):
            groups.setdefault(cls, []).append(i)
        assignments = {cls: features[rows[idx]] for cls, idx in groups.items()}
        self.state.nb = fit_nb(assignments)
        ano = anomaly_scores(self.state.nb, features[rows], pred)
        return [
            ScoredSample(candidates[i], pred[i], float(unc[i]), float(ano[i]))
            for i in range(len(candidates))
        ]

    def _evaluate(self, classifier, features) -> None:
        # progress is tracked over the full ground-truth pool (the whole
        # selected-samples set), so per-class rates are comparable across
        # iterations even as samples move into the labeled side
        if self.truth is None:
            return
        test_ids = [sid for sid in self.order if sid in self.truth]
        if not test_ids:
            return
        rows = np.asarray([self.row_of[sid] for sid in test_ids])
        probs = classifier.predict_proba(features[rows])
        pred = [classifier.classes[i] for i in probs.argmax(axis=1)]
        true = [self.truth[sid] for sid in test_ids]
        metrics = compute_metrics(true, pred, self.class_order)
        record = metrics.to_dict()
        record["iteration"] = self.state.iteration
        record["n_labeled"] = len(self.state.labeled)
        self.state.metrics_history.append(record)

    # -- the protocol --------------------------------------------------

    def run_iteration(self, labeler: Callable[[str], Optional[str]], batch_size: int = 5) -> IterationState:
        """One full cycle: fit, score, rank, select, label, fold back in."""
        state = self.state
        features = self.builder.build(state.score_table)
        classifier = self._fit_classifier(features)
        self.classifier = classifier
        self._evaluate(classifier, features)

        scored = self._score_pool(classifier, features)
        if scored:
            # a batch smaller than one full round only ever consumes the
            # head of the queue, so the head must move: rotate the class
            # the round starts from and alternate which reason leads, or a
            # small fixed batch would starve the late classes and never
            # reach an anomaly slot at all
            shift = state.iteration % len(self.class_order)
            order = self.class_order[shift:] + self.class_order[:shift]
            lead = REASON_UNCERTAIN if state.iteration % 2 == 0 else REASON_ANOMALOUS
            if state.strategy in (LOLAL, LOLAL_LR):
                state.queue = rank_round_robin(scored, order, first_reason=lead)
            elif state.strategy == UNCERTAINTY_ONLY:
                state.queue = _rank_single_reason(scored, order, REASON_UNCERTAIN)
            elif state.strategy == ANOMALY_ONLY:
                state.queue = _rank_single_reason(scored, order, REASON_ANOMALOUS)
            else:
                rng = np.random.default_rng((state.seed, state.iteration))
                perm = rng.permutation(len(scored))
                state.queue = [_entry(scored[i], "random") for i in perm]
        else:
            state.queue = []

        batch = [e.sample_id for e in state.queue[:batch_size]]
        newly_labeled = {}
        for sid in batch:
            if sid in state.presented:
                raise AssertionError(f"sample {sid} presented twice")
            state.presented.add(sid)
            label = labeler(sid)
            if label is None or label not in self.class_order:
                if sid not in state.pending:
                    state.pending.append(sid)
                continue
            newly_labeled[sid] = label

        if newly_labeled:
            state.labeled.update(newly_labeled)
            state.unlabeled = [sid for sid in state.unlabeled if sid not in newly_labeled]
            state.queue = [e for e in state.queue if e.sample_id not in newly_labeled]
            state.score_table = self._rebuild_score_table()

        state.iteration += 1
        state.check_invariants()
        return state

    def run(self, labeler, iterations: int, batch_size: int = 5,
            checkpoint_path: str | None = None) -> IterationState:
        for _ in range(iterations):
            self.run_iteration(labeler, batch_size)
            if checkpoint_path:
                self.state.save(checkpoint_path)
        return self.state


def oracle_labeler(truth: dict) -> Callable[[str], Optional[str]]:
    """A perfect analyst: returns the ground-truth label for any sample."""
    return lambda sid: truth[sid]
