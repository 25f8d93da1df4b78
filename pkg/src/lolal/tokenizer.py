"""Command-line tokenization and vocabulary construction.

A sample is the concatenation of a parent and a child command line. Both
strings are split on a conservative set of single-character delimiters;
the delimiters themselves are kept as tokens (they carry information about
their neighbours), with the exception of whitespace, which is dropped.
Word tokens are lowercased. A reserved separator token marks the boundary
between the parent and the child command line.

The vocabulary maps every token that occurs at least ``min_count`` times in
a corpus to an integer id. Tokens made purely of ASCII digits are counted
under a reserved number token, and everything below the frequency threshold
is folded into a reserved rare token.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

RARE = "<rare>"
NUMBER = "<number>"
SEP = "<sep>"

#: Binaries we monitor, in the fixed one-hot order used everywhere.
LOLBINS = ("Bitsadmin", "Certutil", "Msbuild", "Msiexec", "Regsvr32")

#: Class labels, benign first, then one malicious class per binary.
CLASSES = (
    "Benign",
    "BitsadminLolbin",
    "CertutilLolbin",
    "MsbuildLolbin",
    "MsiexecLolbin",
    "Regsvr32Lolbin",
)

LOLBIN_INDEX = {name: i for i, name in enumerate(LOLBINS)}
CLASS_INDEX = {name: i for i, name in enumerate(CLASSES)}


def malicious_class_for(lolbin: str) -> str:
    """Malicious class name for a binary ("Certutil" -> "CertutilLolbin")."""
    return lolbin + "Lolbin"


# Space plus every structural character that shows up in flags, paths, URLs
# and quoting. Splitting on ':' and '\' is required to break URLs and
# Windows paths into their words.
DEFAULT_DELIMITERS = frozenset(" ,./-:;\\=\"'()[]{}&|<>@?!%+")


@dataclass(frozen=True)
class RawSample:
    """One process-creation event: parent and child command lines."""

    sample_id: str
    parent_cmdline: str
    child_cmdline: str
    lolbin: str
    label: Optional[str] = None

    def __post_init__(self):
        if self.lolbin not in LOLBIN_INDEX:
            raise ValueError(f"unknown lolbin {self.lolbin!r}")
        if self.label is not None and self.label not in CLASS_INDEX:
            raise ValueError(f"unknown label {self.label!r}")


@dataclass
class TokenSequence:
    """Ordered word and delimiter tokens for one sample."""

    tokens: list[str]
    rare_count: int = 0
    numeric_count: int = 0

    def __len__(self) -> int:
        return len(self.tokens)


def _split_pattern(delimiters: frozenset[str]) -> re.Pattern[str]:
    chars = "".join(sorted(delimiters))
    return re.compile("([" + re.escape(chars) + r"\s])")


_DEFAULT_PATTERN = _split_pattern(DEFAULT_DELIMITERS)


def tokenize_text(text: str, delimiters: frozenset[str] = DEFAULT_DELIMITERS) -> list[str]:
    """Split one command-line string into interleaved word and delimiter tokens.

    Word tokens are lowercased; whitespace delimiters are dropped. Empty or
    all-whitespace input yields an empty list.
    """
    if delimiters is DEFAULT_DELIMITERS:
        pattern = _DEFAULT_PATTERN
    else:
        pattern = _split_pattern(delimiters)
    out: list[str] = []
    for part in pattern.split(text):
        if not part:
            continue
        if len(part) == 1 and (part in delimiters or part.isspace()):
            if not part.isspace():
                out.append(part)
        else:
            out.append(part.lower())
    return out


def tokenize(raw: RawSample, delimiters: frozenset[str] = DEFAULT_DELIMITERS) -> TokenSequence:
    """Tokenize a sample: parent tokens, a separator, then child tokens.

    The separator marks the boundary between the two command lines, so it
    is only emitted when both sides produced tokens.
    """
    parent = tokenize_text(raw.parent_cmdline, delimiters)
    child = tokenize_text(raw.child_cmdline, delimiters)
    if parent and child:
        return TokenSequence(tokens=parent + [SEP] + child)
    return TokenSequence(tokens=parent + child)


def is_numeric_token(token: str) -> bool:
    """True when the token consists only of ASCII digits."""
    return bool(token) and all("0" <= c <= "9" for c in token)


@dataclass
class Vocabulary:
    """Token dictionary with corpus frequencies and normalization metadata."""

    token_to_id: dict[str, int] = field(default_factory=dict)
    frequencies: dict[str, int] = field(default_factory=dict)
    min_count: int = 5

    def __post_init__(self):
        for special in (RARE, NUMBER):
            if special not in self.token_to_id:
                self.token_to_id[special] = len(self.token_to_id)
                self.frequencies.setdefault(special, 0)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def __len__(self) -> int:
        return len(self.token_to_id)

    def id_of(self, token: str) -> int:
        return self.token_to_id[token]

    def to_dict(self) -> dict:
        # ids follow insertion order, so storing frequencies in id order is
        # enough to rebuild the mapping.
        ordered = sorted(self.token_to_id, key=self.token_to_id.get)
        return {
            "version": 1,
            "min_count": self.min_count,
            "tokens": {tok: self.frequencies.get(tok, 0) for tok in ordered},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Vocabulary":
        if payload.get("version") != 1:
            raise ValueError(f"unsupported vocabulary version {payload.get('version')!r}")
        tokens = payload["tokens"]
        vocab = cls(min_count=payload["min_count"])
        for tok, freq in tokens.items():
            if tok not in vocab.token_to_id:
                vocab.token_to_id[tok] = len(vocab.token_to_id)
            vocab.frequencies[tok] = freq
        return vocab

    def save(self, path: str) -> None:
        _atomic_write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_vocabulary(
    corpus: Iterable[RawSample],
    min_count: int = 5,
    delimiters: frozenset[str] = DEFAULT_DELIMITERS,
) -> Vocabulary:
    """Count tokens over a corpus and keep the ones above the threshold.

    Numeric tokens are counted under the number token. Every dropped token
    contributes its occurrences to the rare token's frequency. Deterministic
    for a fixed corpus order: surviving tokens are numbered in order of
    first appearance.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[str, int] = {}
    numeric_occurrences = 0
    for sample in corpus:
        for token in tokenize(sample, delimiters).tokens:
            if is_numeric_token(token):
                numeric_occurrences += 1
            else:
                counts[token] = counts.get(token, 0) + 1

    vocab = Vocabulary(min_count=min_count)
    vocab.frequencies[NUMBER] = numeric_occurrences
    rare_total = 0
    for token, freq in counts.items():
        if freq >= min_count:
            vocab.token_to_id[token] = len(vocab.token_to_id)
            vocab.frequencies[token] = freq
        else:
            rare_total += freq
    vocab.frequencies[RARE] = rare_total
    return vocab


def normalize(seq: TokenSequence, vocab: Vocabulary) -> TokenSequence:
    """Map numeric tokens to NUMBER and out-of-dictionary tokens to RARE.

    Idempotent: the special tokens map to themselves, so a second pass is a
    no-op. The separator is always kept as-is.
    """
    tokens: list[str] = []
    rare = numeric = 0
    for token in seq.tokens:
        if token == SEP:
            tokens.append(SEP)
        elif is_numeric_token(token):
            tokens.append(NUMBER)
        elif token in vocab:
            tokens.append(token)
        else:
            tokens.append(RARE)
    for token in tokens:
        if token == RARE:
            rare += 1
        elif token == NUMBER:
            numeric += 1
    return TokenSequence(tokens=tokens, rare_count=rare, numeric_count=numeric)


def read_corpus(path: str) -> Iterator[RawSample]:
    """Stream samples from a JSON-lines corpus file."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            yield RawSample(
                sample_id=str(obj["id"]),
                parent_cmdline=obj.get("parent", ""),
                child_cmdline=obj.get("child", ""),
                lolbin=obj["lolbin"],
                label=obj.get("label"),
            )


def write_corpus(path: str, samples: Iterable[RawSample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            obj = {
                "id": s.sample_id,
                "parent": s.parent_cmdline,
                "child": s.child_cmdline,
                "lolbin": s.lolbin,
            }
            if s.label is not None:
                obj["label"] = s.label
            fh.write(json.dumps(obj) + "\n")


def _atomic_write_json(path: str, payload: dict) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
