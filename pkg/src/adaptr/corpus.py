"""Timed transcripts, word-to-utterance alignment and parallel corpora.

Reference transcripts arrive at utterance level (one JSON object per
utterance), ASR output at word level with per-word times. Words are placed
into the utterance whose half-open span ``[start, end)`` contains the word's
temporal midpoint, which yields (hypothesis, reference) token pairs keyed by
``(conv_id, utt_id)``.
"""
from __future__ import annotations

import bisect
import json
import logging
import math
import re
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .nn.rng import make_rng

log = logging.getLogger(__name__)

ROLES = ("Doctor", "Patient")

_TOKEN_RE = re.compile(
    r"\w+(?=n't\b)"           # "do" in "don't"
    r"|n't\b"
    r"|'(?:s|re|ve|ll|d|m)\b"
    r"|\d+(?:[.,]\d+)+"       # 2.5, 1,000
    r"|\w+(?:-\w+)*"          # words, hyphenated compounds
    r"|[^\w\s]"
)


class CorpusError(ValueError):
    """Malformed or inconsistent transcript data."""


@dataclass(frozen=True)
class WordToken:
    text: str
    start: float
    end: float
    confidence: float | None = None

    def __post_init__(self):
        if not self.text:
            raise CorpusError("word text is empty after normalization")
        if self.end < self.start:
            raise CorpusError(f"word {self.text!r} ends before it starts ({self.start} > {self.end})")

    @property
    def midpoint(self):
        return 0.5 * (self.start + self.end)


@dataclass(frozen=True)
class Utterance:
    conv_id: str
    utt_id: str
    speaker: str
    start: float
    end: float
    tokens: tuple = ()

    def __post_init__(self):
        if self.speaker not in ROLES:
            raise CorpusError(f"utterance {self.utt_id}: speaker must be one of {ROLES}")
        if not self.end > self.start:
            raise CorpusError(f"utterance {self.utt_id}: end must exceed start")
        object.__setattr__(self, "tokens", tuple(self.tokens))

    @property
    def text(self):
        return " ".join(self.tokens)


@dataclass
class Conversation:
    conv_id: str
    utterances: list = field(default_factory=list)

    def __post_init__(self):
        self.utterances = sorted(self.utterances, key=lambda u: u.start)


@dataclass(frozen=True)
class ParallelPair:
    conv_id: str
    utt_id: str
    source: tuple
    target: tuple
    speaker: str

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "target", tuple(self.target))

    @property
    def key(self):
        return (self.conv_id, self.utt_id)

    def to_json(self):
        return {"conv_id": self.conv_id, "utt_id": self.utt_id, "speaker": self.speaker,
                "source": list(self.source), "target": list(self.target)}


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    valid_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.valid_fraction, self.test_fraction)
        if any(f <= 0 for f in fr):
            raise CorpusError(f"split fractions must be positive, got {fr}")
        if not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
            raise CorpusError(f"split fractions must sum to 1, got {sum(fr)}")


# -- tokens ----------------------------------------------------------------

def normalize_token(raw):
    return raw.strip().lower()


def tokenize(text):
    """Lowercased word tokens with clitics and punctuation split off.

    >>> tokenize("That's why you're on the Coumadin.")
    ['that', "'s", 'why', 'you', "'re", 'on', 'the', 'coumadin', '.']
    """
    return [t for t in (normalize_token(m) for m in _TOKEN_RE.findall(text.lower())) if t]


# -- alignment -------------------------------------------------------------

def assign_words_to_utterances(words, utts):
    """Map each word to the utterance containing its midpoint.

    Returns ``(assignment, dropped)`` where ``assignment`` maps every
    ``utt_id`` to its words in start order and ``dropped`` counts words
    falling outside every span. With overlapping spans the
    earliest-starting utterance wins.
    """
    ordered = sorted(utts, key=lambda u: u.start)
    starts = [u.start for u in ordered]
    assignment = OrderedDict((u.utt_id, []) for u in utts)
    dropped = 0
    for w in sorted(words, key=lambda w: w.start):
        mid = w.midpoint
        hi = bisect.bisect_right(starts, mid)
        for u in ordered[:hi]:
            if u.start <= mid < u.end:
                assignment[u.utt_id].append(w)
                break
        else:
            dropped += 1
    return assignment, dropped


def build_parallel_corpus(reference, asr_words, drop_empty=False):
    """One :class:`ParallelPair` per reference utterance, in reference order.

    ``asr_words`` maps ``conv_id`` to that conversation's word list;
    conversations missing from it get empty sources.
    """
    known = {c.conv_id for c in reference}
    for conv_id in asr_words:
        if conv_id not in known:
            raise CorpusError(f"ASR words reference unknown conversation {conv_id!r}")
    pairs, dropped = [], 0
    for conv in reference:
        assignment, n_drop = assign_words_to_utterances(asr_words.get(conv.conv_id, []),
                                                        conv.utterances)
        dropped += n_drop
        for u in conv.utterances:
            source = [w.text for w in assignment[u.utt_id]]
            if drop_empty and not source:
                continue
            pairs.append(ParallelPair(conv.conv_id, u.utt_id, source, u.tokens, u.speaker))
    if dropped:
        log.info("%d ASR words fell outside every reference utterance and were dropped", dropped)
    return pairs


def split_corpus(pairs, spec=None, by="utterance"):
    """Seeded random train/valid/test partition.

    Items (utterances, or whole conversations with ``by="conversation"``)
    are shuffled under ``spec.seed``; valid and test each take
    ``floor(n * fraction)`` items and train keeps the remainder. Each split
    keeps the input order of its pairs.
    """
    spec = spec or SplitSpec()
    pairs = list(pairs)
    if len(pairs) < 3:
        raise CorpusError(f"need at least 3 pairs to split, got {len(pairs)}")
    if by == "utterance":
        units = list(range(len(pairs)))
        unit_of = list(range(len(pairs)))
    elif by == "conversation":
        units = list(OrderedDict.fromkeys(p.conv_id for p in pairs))
        unit_of = [p.conv_id for p in pairs]
    else:
        raise CorpusError(f"unknown split unit {by!r}")
    n = len(units)
    order = make_rng(spec.seed).permutation(n)
    n_valid = int(math.floor(n * spec.valid_fraction))
    n_test = int(math.floor(n * spec.test_fraction))
    n_train = n - n_valid - n_test
    label = {}
    for pos, idx in enumerate(order):
        unit = units[int(idx)]
        label[unit] = "train" if pos < n_train else ("valid" if pos < n_train + n_valid else "test")
    out = {"train": [], "valid": [], "test": []}
    for p, unit in zip(pairs, unit_of):
        out[label[unit]].append(p)
    return out


def split_keys(split):
    return {name: [p.key for p in ps] for name, ps in split.items()}


def apply_split(pairs, keys):
    """Partition ``pairs`` following an existing split's key lists."""
    where = {}
    for name, ks in keys.items():
        for k in ks:
            where[tuple(k)] = name
    out = {name: [] for name in keys}
    for p in pairs:
        name = where.get(p.key)
        if name is not None:
            out[name].append(p)
    return out


# -- JSONL I/O ------------------------------------------------------------

def _iter_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None


def _field(obj, name, path, lineno, kind=str):
    if name not in obj:
        raise CorpusError(f"{path}:{lineno}: missing required field {name!r}")
    value = obj[name]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise CorpusError(f"{path}:{lineno}: field {name!r} must be a finite number")
        return float(value)
    if not isinstance(value, kind):
        raise CorpusError(f"{path}:{lineno}: field {name!r} must be {kind.__name__}")
    return value


def ingest_reference(path):
    convs, seen = OrderedDict(), set()
    for lineno, obj in _iter_jsonl(path):
        conv_id = _field(obj, "conv_id", path, lineno)
        utt_id = _field(obj, "utt_id", path, lineno)
        speaker = _field(obj, "speaker", path, lineno)
        start = _field(obj, "start", path, lineno, float)
        end = _field(obj, "end", path, lineno, float)
        text = _field(obj, "text", path, lineno)
        if (conv_id, utt_id) in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate utterance ({conv_id}, {utt_id})")
        seen.add((conv_id, utt_id))
        if start < 0 or end <= start:
            raise CorpusError(f"{path}:{lineno}: need 0 <= start < end, got [{start}, {end}]")
        if speaker not in ROLES:
            raise CorpusError(f"{path}:{lineno}: speaker must be one of {ROLES}, got {speaker!r}")
        convs.setdefault(conv_id, []).append(
            Utterance(conv_id, utt_id, speaker, start, end, tokenize(text)))
    return [Conversation(cid, utts) for cid, utts in convs.items()]


def ingest_asr_words(path):
    """Per-conversation word lists, sorted by start time.

    A raw ASR word that tokenizes into several tokens ("that's") is split
    into equal sub-spans so every token keeps a time.
    """
    out = OrderedDict()
    for lineno, obj in _iter_jsonl(path):
        conv_id = _field(obj, "conv_id", path, lineno)
        word = _field(obj, "word", path, lineno)
        start = _field(obj, "start", path, lineno, float)
        end = _field(obj, "end", path, lineno, float)
        conf = obj.get("confidence")
        if conf is not None:
            conf = _field(obj, "confidence", path, lineno, float)
            if not 0.0 <= conf <= 1.0:
                raise CorpusError(f"{path}:{lineno}: confidence must lie in [0, 1]")
        if start < 0 or end < start:
            raise CorpusError(f"{path}:{lineno}: need 0 <= start <= end, got [{start}, {end}]")
        pieces = tokenize(word)
        if not pieces:
            raise CorpusError(f"{path}:{lineno}: word {word!r} is empty after normalization")
        step = (end - start) / len(pieces)
        words = out.setdefault(conv_id, [])
        for k, piece in enumerate(pieces):
            words.append(WordToken(piece, start + k * step, start + (k + 1) * step, conf))
    for words in out.values():
        words.sort(key=lambda w: w.start)
    return out


def _dump(obj):
    return json.dumps(obj, ensure_ascii=False, sort_keys=False)


def write_reference(conversations, path):
    with open(path, "w", encoding="utf-8") as fh:
        for conv in conversations:
            for u in conv.utterances:
                fh.write(_dump({"conv_id": u.conv_id, "utt_id": u.utt_id, "speaker": u.speaker,
                                "start": u.start, "end": u.end, "text": u.text}) + "\n")


def write_asr_words(words_by_conv, path):
    with open(path, "w", encoding="utf-8") as fh:
        for conv_id, words in words_by_conv.items():
            for w in words:
                obj = {"conv_id": conv_id, "word": w.text, "start": w.start, "end": w.end}
                if w.confidence is not None:
                    obj["confidence"] = w.confidence
                fh.write(_dump(obj) + "\n")


def write_pairs(pairs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(_dump(p.to_json()) + "\n")


def read_pairs(path):
    pairs, seen = [], set()
    for lineno, obj in _iter_jsonl(path):
        conv_id = _field(obj, "conv_id", path, lineno)
        utt_id = _field(obj, "utt_id", path, lineno)
        speaker = _field(obj, "speaker", path, lineno)
        source = _field(obj, "source", path, lineno, list)
        target = _field(obj, "target", path, lineno, list)
        if (conv_id, utt_id) in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate pair ({conv_id}, {utt_id})")
        seen.add((conv_id, utt_id))
        if speaker not in ROLES:
            raise CorpusError(f"{path}:{lineno}: speaker must be one of {ROLES}, got {speaker!r}")
        if not all(isinstance(t, str) for t in source + target):
            raise CorpusError(f"{path}:{lineno}: source/target must be lists of strings")
        pairs.append(ParallelPair(conv_id, utt_id, source, target, speaker))
    return pairs


def corpus_stats(pairs):
    src = np.array([len(p.source) for p in pairs])
    tgt = np.array([len(p.target) for p in pairs])
    return {"pairs": len(pairs), "source_tokens": int(src.sum()), "target_tokens": int(tgt.sum()),
            "empty_sources": int((src == 0).sum())}
