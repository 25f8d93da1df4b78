"""HTTP labeling service: the live loop, one analyst at a time.

A session bootstraps its models from an existing labeled corpus, scores an
unlabeled pool, and queues the most uncertain and most anomalous samples
(25 + 25 by default) for review. Analysts submit labels one by one; when
they advance the iteration the staged labels join the training set, the
models retrain, and a fresh queue is computed along with the per-reason
accuracy of what was just reviewed (how often a sample the classifier
called malicious was confirmed malicious).

Every mutation is durable: the session checkpoint is rewritten atomically
on creation and on every iteration, and accepted labels go to an
append-only journal that is replayed over the checkpoint on restart, so a
killed and restarted service serves an identical queue. Mutations
serialize through a per-session lock; for one sample, the first label
wins.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .active_learning import REASON_ANOMALOUS, REASON_UNCERTAIN, uncertainty_scores
from .anomaly import anomaly_scores, fit_nb
from .classifiers import BoostedHyper, LogisticHyper, fit_boosted, fit_logistic
from .embeddings import FASTTEXT, EmbeddingConfig, EmbeddingModel, train_embeddings
from .featurize import FeatureMatrixBuilder
from .token_scores import TokenScoreTable, build_score_table
from .tokenizer import (
    CLASSES,
    RawSample,
    Vocabulary,
    _atomic_write_json,
    build_vocabulary,
    normalize,
    read_corpus,
    tokenize,
)

SCHEMA_VERSION = 1


class SessionError(Exception):
    def __init__(self, message: str, status: int = 400):
        super().__init__(message)
        self.status = status


@dataclass
class SessionConfig:
    k_uncertain: int = 25
    k_anomalous: int = 25
    classifier: str = "boosted"  # or "logistic"
    seed: int = 0
    embedding_mode: str = FASTTEXT
    embedding_epochs: int = 20
    embedding_dim: int = 16
    min_count: int = 5
    score_trees: int = 20
    boost_stages: int = 60
    boost_depth: int = 3
    boost_learning_rate: float = 0.2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "SessionConfig":
        return cls(**payload)


@dataclass
class QueueItem:
    sample_id: str
    reason: str
    rank: int
    parent_cmdline: str
    child_cmdline: str
    lolbin: str
    predicted_class: str
    posterior: dict
    uncertainty: float
    anomaly: float
    token_scores: list  # [token, score] pairs in command order

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "QueueItem":
        return cls(**payload)


class LabelingSession:
    """One analyst-facing loop over a labeled corpus and an unlabeled pool."""

    def __init__(self, session_id: str, directory: str, config: SessionConfig,
                 labeled: list[RawSample], pool: list[RawSample]):
        self.session_id = session_id
        self.directory = directory
        self.config = config
        self.lock = threading.RLock()

        self.bootstrap = {s.sample_id: s.label for s in labeled}
        if len(set(self.bootstrap.values())) < 2:
            raise SessionError(
                "insufficient seed labels: need labeled samples covering at least 2 classes",
                status=422,
            )
        self.samples = {s.sample_id: s for s in labeled + pool}
        self.pool_ids = [s.sample_id for s in pool]

        self.iteration = 0
        self.labeled: dict[str, str] = dict(self.bootstrap)
        self.staged: dict[str, str] = {}
        self.queue: list[QueueItem] = []
        self.done: set[str] = set()  # queue items labeled this iteration
        self.metrics_history: list[dict] = []

        self.emb: Optional[EmbeddingModel] = None
        self.vocab: Optional[Vocabulary] = None
        self.builder: Optional[FeatureMatrixBuilder] = None
        self.score_table: Optional[TokenScoreTable] = None

    # -- paths -----------------------------------------------------------

    @property
    def checkpoint_path(self) -> str:
        return os.path.join(self.directory, "session.json")

    @property
    def journal_path(self) -> str:
        return os.path.join(self.directory, "journal.jsonl")

    @property
    def embedding_path(self) -> str:
        return os.path.join(self.directory, "embeddings.json")

    # -- model plumbing ----------------------------------------------------

    def _ensure_models(self) -> None:
        if self.builder is not None:
            return
        all_samples = [self.samples[sid] for sid in sorted(self.samples)]
        self.vocab = build_vocabulary(all_samples, min_count=self.config.min_count)
        if os.path.exists(self.embedding_path):
            self.emb = EmbeddingModel.load(self.embedding_path)
        else:
            seqs = [normalize(tokenize(s), self.vocab) for s in all_samples]
            emb_config = EmbeddingConfig(
                dim=self.config.embedding_dim,
                epochs=self.config.embedding_epochs,
                min_count=self.config.min_count,
                mode=self.config.embedding_mode,
                seed=self.config.seed,
            )
            self.emb = train_embeddings(seqs, emb_config)
            self.emb.save(self.embedding_path)
        ordered = [self.samples[sid] for sid in sorted(self.samples)]
        self.builder = FeatureMatrixBuilder(ordered, self.emb, self.vocab)
        self.row_of = {sid: i for i, sid in enumerate(sorted(self.samples))}

    def _labeled_samples(self) -> list[RawSample]:
        import dataclasses as dc

        return [
            dc.replace(self.samples[sid], label=lbl)
            for sid, lbl in sorted(self.labeled.items())
        ]

    def _retrain_and_queue(self) -> None:
        self._ensure_models()
        try:
            self.score_table = build_score_table(
                self._labeled_samples(), self.emb, self.vocab,
                n_trees=self.config.score_trees, seed=self.config.seed,
            )
        except ValueError:
            # labeled set is single-sided (no benign or no malicious yet):
            # every pair keeps the uninformative default score
            self.score_table = TokenScoreTable()
        features = self.builder.build(self.score_table)
        lab_ids = sorted(self.labeled)
        X = features[[self.row_of[sid] for sid in lab_ids]]
        y = [self.labeled[sid] for sid in lab_ids]
        if self.config.classifier == "logistic":
            clf = fit_logistic(X, y, LogisticHyper(seed=self.config.seed))
        else:
            clf = fit_boosted(X, y, BoostedHyper(
                n_stages=self.config.boost_stages,
                max_depth=self.config.boost_depth,
                learning_rate=self.config.boost_learning_rate,
                seed=self.config.seed,
            ))

        candidates = [sid for sid in self.pool_ids if sid not in self.labeled]
        self.queue = []
        self.done = set()
        if candidates and (self.config.k_uncertain or self.config.k_anomalous):
            rows = np.asarray([self.row_of[sid] for sid in candidates])
            probs = clf.predict_proba(features[rows])
            unc = uncertainty_scores(probs) if probs.shape[1] >= 2 else np.zeros(len(rows))
            pred = [clf.classes[i] for i in probs.argmax(axis=1)]
            groups: dict[str, list[int]] = {}
            for i, cls in enumerate(pred):
                groups.setdefault(cls, []).append(i)
            nb = fit_nb({cls: features[rows[idx]] for cls, idx in groups.items()})
            ano = anomaly_scores(nb, features[rows], pred)

            order_unc = sorted(
                range(len(candidates)), key=lambda i: (-unc[i], candidates[i])
            )[: self.config.k_uncertain]
            chosen = set(order_unc)
            order_ano = [
                i for i in sorted(range(len(candidates)), key=lambda i: (-ano[i], candidates[i]))
                if i not in chosen
            ][: self.config.k_anomalous]

            rank = 0
            for reason, ordering in ((REASON_UNCERTAIN, order_unc), (REASON_ANOMALOUS, order_ano)):
                for i in ordering:
                    sid = candidates[i]
                    sample = self.samples[sid]
                    seq = normalize(tokenize(sample), self.vocab)
                    token_scores = [
                        [tok, self.score_table.lookup(tok, sample.lolbin)]
                        for tok in seq.tokens
                    ]
                    self.queue.append(QueueItem(
                        sample_id=sid,
                        reason=reason,
                        rank=rank,
                        parent_cmdline=sample.parent_cmdline,
                        child_cmdline=sample.child_cmdline,
                        lolbin=sample.lolbin,
                        predicted_class=pred[i],
                        posterior={c: float(p) for c, p in zip(clf.classes, probs[i])},
                        uncertainty=float(unc[i]),
                        anomaly=float(ano[i]),
                        token_scores=token_scores,
                    ))
                    rank += 1

    # -- durable state -----------------------------------------------------

    def checkpoint(self) -> None:
        payload = {
            "version": SCHEMA_VERSION,
            "kind": "labeling_session",
            "session_id": self.session_id,
            "config": self.config.to_dict(),
            "iteration": self.iteration,
            "bootstrap": self.bootstrap,
            "labeled": self.labeled,
            "pool_ids": self.pool_ids,
            "queue": [item.to_dict() for item in self.queue],
            "metrics_history": self.metrics_history,
            "samples": {
                sid: {
                    "parent": s.parent_cmdline,
                    "child": s.child_cmdline,
                    "lolbin": s.lolbin,
                }
                for sid, s in self.samples.items()
            },
        }
        _atomic_write_json(self.checkpoint_path, payload)

    def _journal(self, entry: dict) -> None:
        with open(self.journal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    @classmethod
    def restore(cls, directory: str) -> "LabelingSession":
        with open(os.path.join(directory, "session.json"), "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("version") != SCHEMA_VERSION:
            raise SessionError("unsupported session file version", status=500)
        config = SessionConfig.from_dict(payload["config"])
        session = cls.__new__(cls)
        session.session_id = payload["session_id"]
        session.directory = directory
        session.config = config
        session.lock = threading.RLock()
        session.bootstrap = payload["bootstrap"]
        session.samples = {
            sid: RawSample(sid, v["parent"], v["child"], lolbin=v["lolbin"])
            for sid, v in payload["samples"].items()
        }
        session.pool_ids = payload["pool_ids"]
        session.iteration = payload["iteration"]
        session.labeled = dict(payload["labeled"])
        session.staged = {}
        session.queue = [QueueItem.from_dict(item) for item in payload["queue"]]
        session.done = set()
        session.metrics_history = list(payload["metrics_history"])
        session.emb = None
        session.vocab = None
        session.builder = None
        session.score_table = None
        # labels journaled after the checkpoint are staged again
        if os.path.exists(session.journal_path):
            with open(session.journal_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    entry = json.loads(line)
                    if entry["iteration"] == session.iteration:
                        session.staged[entry["sample_id"]] = entry["label"]
                        session.done.add(entry["sample_id"])
        return session

    # -- operations ---------------------------------------------------------

    def pending_items(self) -> list[QueueItem]:
        return [item for item in self.queue if item.sample_id not in self.done]

    def submit_label(self, sample_id: str, label: str, analyst_id: str) -> dict:
        with self.lock:
            if label not in CLASSES:
                raise SessionError(f"unknown label class {label!r}", status=422)
            queued = {item.sample_id for item in self.queue}
            if sample_id not in self.samples:
                raise SessionError(f"unknown sample {sample_id!r}", status=404)
            if sample_id in self.done or sample_id in self.labeled:
                raise SessionError(f"sample {sample_id!r} already labeled", status=409)
            if sample_id not in queued:
                raise SessionError(f"sample {sample_id!r} is not pending", status=409)
            self._journal({
                "iteration": self.iteration,
                "sample_id": sample_id,
                "label": label,
                "analyst_id": analyst_id,
            })
            self.staged[sample_id] = label
            self.done.add(sample_id)
            return {
                "sample_id": sample_id,
                "label": label,
                "remaining": len(self.queue) - len(self.done),
            }

    def advance_iteration(self) -> dict:
        with self.lock:
            if not self.staged:
                raise SessionError("nothing to learn: no labels staged", status=409)
            accuracy = self._selection_accuracy()
            self.labeled.update(self.staged)
            n_new = len(self.staged)
            self.staged = {}
            self.iteration += 1
            self._retrain_and_queue()
            summary = {
                "iteration": self.iteration,
                "new_labels": n_new,
                "labeled_total": len(self.labeled),
                "queue_size": len(self.queue),
                "selection_accuracy": accuracy,
            }
            self.metrics_history.append(summary)
            self.checkpoint()
            return summary

    def _selection_accuracy(self) -> dict:
        by_reason: dict[str, list[bool]] = {REASON_UNCERTAIN: [], REASON_ANOMALOUS: []}
        for item in self.queue:
            label = self.staged.get(item.sample_id)
            if label is None or item.predicted_class == "Benign":
                continue
            by_reason[item.reason].append(label != "Benign")
        out = {}
        all_hits: list[bool] = []
        for reason, hits in by_reason.items():
            out[reason] = (sum(hits) / len(hits)) if hits else None
            all_hits.extend(hits)
        out["overall"] = (sum(all_hits) / len(all_hits)) if all_hits else None
        out["n_considered"] = len(all_hits)
        return out

    def sample_detail(self, sample_id: str) -> dict:
        if sample_id not in self.samples:
            raise SessionError(f"unknown sample {sample_id!r}", status=404)
        sample = self.samples[sample_id]
        detail = {
            "sample_id": sample_id,
            "parent_cmdline": sample.parent_cmdline,
            "child_cmdline": sample.child_cmdline,
            "lolbin": sample.lolbin,
            "label": self.labeled.get(sample_id) or self.staged.get(sample_id),
            "status": (
                "labeled" if sample_id in self.labeled
                else "staged" if sample_id in self.staged
                else "queued" if any(i.sample_id == sample_id for i in self.queue)
                else "pool"
            ),
        }
        for item in self.queue:
            if item.sample_id == sample_id:
                detail["queue_item"] = item.to_dict()
                break
        return detail


class SessionStore:
    """Sessions on disk under one state directory, loaded on demand."""

    def __init__(self, state_dir: str, labeled_path: str, pool_path: str | None = None,
                 default_config: SessionConfig | None = None):
        self.state_dir = state_dir
        self.labeled_path = labeled_path
        self.pool_path = pool_path
        self.default_config = default_config or SessionConfig()
        self.sessions: dict[str, LabelingSession] = {}
        self.lock = threading.Lock()
        os.makedirs(state_dir, exist_ok=True)

    def _load_corpus(self) -> tuple[list[RawSample], list[RawSample]]:
        samples = list(read_corpus(self.labeled_path))
        if self.pool_path:
            labeled = [s for s in samples if s.label is not None]
            pool = list(read_corpus(self.pool_path))
        else:
            labeled = [s for s in samples if s.label is not None]
            pool = [s for s in samples if s.label is None]
        if not labeled:
            raise SessionError("corpus has no labeled samples", status=422)
        return labeled, pool

    def create(self, overrides: dict | None = None) -> LabelingSession:
        config_dict = self.default_config.to_dict()
        config_dict.update(overrides or {})
        config = SessionConfig.from_dict(config_dict)
        labeled, pool = self._load_corpus()
        session_id = uuid.uuid4().hex[:12]
        directory = os.path.join(self.state_dir, session_id)
        os.makedirs(directory, exist_ok=True)
        session = LabelingSession(session_id, directory, config, labeled, pool)
        with session.lock:
            session._retrain_and_queue()
            session.checkpoint()
        with self.lock:
            self.sessions[session_id] = session
        return session

    def get(self, session_id: str) -> LabelingSession:
        with self.lock:
            session = self.sessions.get(session_id)
            if session is not None:
                return session
        directory = os.path.join(self.state_dir, session_id)
        if not os.path.exists(os.path.join(directory, "session.json")):
            raise SessionError(f"unknown session {session_id!r}", status=404)
        session = LabelingSession.restore(directory)
        with self.lock:
            self.sessions.setdefault(session_id, session)
            return self.sessions[session_id]


def create_app(store: SessionStore):
    """FastAPI application over a session store."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="lolal labeling service")

    def ok(payload: dict, status: int = 200) -> JSONResponse:
        payload = {"schema_version": SCHEMA_VERSION, **payload}
        return JSONResponse(payload, status_code=status)

    @app.exception_handler(SessionError)
    async def _session_error(_request: Request, exc: SessionError):
        return ok({"error": str(exc)}, status=exc.status)

    @app.post("/sessions")
    async def create_session(body: dict | None = None):
        session = store.create(body or {})
        return ok({
            "session_id": session.session_id,
            "iteration": session.iteration,
            "queue_size": len(session.queue),
            "labeled_total": len(session.labeled),
        }, status=201)

    @app.get("/sessions/{session_id}/queue")
    async def get_queue(session_id: str):
        session = store.get(session_id)
        with session.lock:
            items = [item.to_dict() for item in session.pending_items()]
            return ok({
                "session_id": session_id,
                "iteration": session.iteration,
                "items": items,
            })

    @app.post("/sessions/{session_id}/labels")
    async def submit_label(session_id: str, body: dict):
        session = store.get(session_id)
        for key in ("sample_id", "label", "analyst_id"):
            if key not in body:
                raise SessionError(f"missing field {key!r}", status=422)
        ack = session.submit_label(body["sample_id"], body["label"], body["analyst_id"])
        return ok({"session_id": session_id, "ack": ack})

    @app.post("/sessions/{session_id}/iterate")
    async def iterate(session_id: str):
        session = store.get(session_id)
        summary = session.advance_iteration()
        return ok({"session_id": session_id, "summary": summary})

    @app.get("/sessions/{session_id}/metrics")
    async def metrics(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return ok({
                "session_id": session_id,
                "iteration": session.iteration,
                "labeled_total": len(session.labeled),
                "history": session.metrics_history,
            })

    @app.get("/sessions/{session_id}/samples/{sample_id}")
    async def sample_detail(session_id: str, sample_id: str):
        session = store.get(session_id)
        with session.lock:
            return ok({"session_id": session_id, "sample": session.sample_detail(sample_id)})

    return app
