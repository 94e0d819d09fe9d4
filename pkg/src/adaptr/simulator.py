"""Synthetic doctor-patient dialogues and an ASR-like corruption channel.

``generate_dialogues`` writes reference conversations with utterance
timings; ``corrupt`` turns them into timed ASR words. Every emitted word
sits inside its source token's time slice, so midpoint alignment recovers
the original utterance assignment exactly.

Simulation configs are JSON::

    {"seed": 0,
     "dialogue": {...DialogueSpec fields...},
     "channels": {"google": {...ChannelSpec fields...}, "aspire": {...}}}
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .corpus import Conversation, Utterance, WordToken, write_asr_words, write_reference

SHARED_WORDS = (
    "the a and i you it is that to of in we so yeah okay on for with this have just do not "
    "but what know about like be at can will there was are your my one time day days week "
    "little bit more get go well right now then same way 's 're n't"
).split()

DOCTOR_WORDS = (
    "take dose prescribe blood pressure milligrams daily continue increase check labs results "
    "refill medication twice morning evening test level follow recommend heart cholesterol "
    "monitor tablet"
).split()

PATIENT_WORDS = (
    "feel pain tired hurts sleep dizzy worried noticed since headache been stomach back legs "
    "better worse sometimes husband wife work forget trouble cough breathing swelling"
).split()

MEDICATIONS = (
    "coumadin statin lisinopril metformin aspirin warfarin insulin lasix plavix vitamin "
    "prednisone tylenol"
).split()

# misrecognitions in the style of "cool midi" / "cool molina" / "cumin in"
DEFAULT_SHATTER_RULES = {
    "coumadin": [[["cool", "midi"], 0.4], [["cool", "molina"], 0.3], [["cumin", "in"], 0.3]],
    "statin": [[["stat", "in"], 0.5], [["static"], 0.5]],
    "lisinopril": [[["listen", "april"], 0.6], [["lease", "no", "pril"], 0.4]],
    "metformin": [[["met", "for", "men"], 1.0]],
    "warfarin": [[["war", "far", "in"], 1.0]],
    "lasix": [[["lay", "six"], 1.0]],
    "plavix": [[["play", "vix"], 1.0]],
    "prednisone": [[["pred", "nice", "own"], 1.0]],
    "insulin": [[["in", "soon", "lin"], 1.0]],
    "tylenol": [[["tie", "lenol"], 1.0]],
}

FILLERS = ["uh", "um", "hmm", "mm"]


class ConfigError(ValueError):
    pass


def _zipf(n, s=1.0):
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


@dataclass
class DialogueSpec:
    n_conversations: int = 40
    utterances_per_conversation: tuple = (40, 60)
    tokens_per_utterance: tuple = (4, 12)
    doctor_prior: float = 0.709
    patient_to_doctor: float = 0.85  # alternation bias; the reverse rate keeps doctor_prior
    role_word_rate: float = 0.12
    doctor_term_rate: float = 0.15
    patient_term_rate: float = 0.02
    shared_words: list = field(default_factory=lambda: list(SHARED_WORDS))
    doctor_words: list = field(default_factory=lambda: list(DOCTOR_WORDS))
    patient_words: list = field(default_factory=lambda: list(PATIENT_WORDS))
    terms: list = field(default_factory=lambda: list(MEDICATIONS))
    seconds_per_token: float = 0.3
    gap_seconds: float = 0.25
    seed: int = 0

    def __post_init__(self):
        self.utterances_per_conversation = tuple(self.utterances_per_conversation)
        self.tokens_per_utterance = tuple(self.tokens_per_utterance)
        if not 0 < self.doctor_prior < 1:
            raise ConfigError("doctor_prior must lie in (0, 1)")
        for name in ("role_word_rate", "doctor_term_rate", "patient_term_rate"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.role_word_rate + max(self.doctor_term_rate, self.patient_term_rate) > 1:
            raise ConfigError("role_word_rate plus a term rate exceeds 1")
        lo, hi = self.tokens_per_utterance
        if lo < 1 or hi < lo:
            raise ConfigError("tokens_per_utterance must be a range with min >= 1")

    def role_transitions(self):
        """(P(Doctor -> Patient), P(Patient -> Doctor)) with stationary P(Doctor) = prior."""
        pi = self.doctor_prior
        p2d = self.patient_to_doctor
        d2p = p2d * (1 - pi) / pi
        if d2p > 1:
            d2p, p2d = 1.0, pi / (1 - pi)
        return d2p, p2d


@dataclass
class ChannelSpec:
    substitution_rate: float = 0.06
    deletion_rate: float = 0.03
    insertion_rate: float = 0.05
    shatter_rate: float | None = 0.9  # None: use substitution_rate
    shatter_rules: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_SHATTER_RULES)))
    substitution_vocab: list | None = None  # None: non-term words of the reference
    insertion_vocab: list = field(default_factory=lambda: list(FILLERS))
    jitter: bool = False
    seed: int = 1

    def __post_init__(self):
        for name in ("substitution_rate", "deletion_rate", "insertion_rate"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.substitution_rate + self.deletion_rate > 1:
            raise ConfigError("substitution_rate + deletion_rate exceeds 1")
        if self.shatter_rate is not None and not 0 <= self.shatter_rate <= 1:
            raise ConfigError("shatter_rate must lie in [0, 1]")
        rules = {}
        for term, variants in self.shatter_rules.items():
            if not variants:
                raise ConfigError(f"shatter rule for {term!r} has no variants")
            weights = np.array([w for _, w in variants], dtype=float)
            if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
                raise ConfigError(f"shatter weights for {term!r} must be >= 0 and sum to 1")
            rules[term] = [[list(words), float(w)] for words, w in variants]
        self.shatter_rules = rules

    @property
    def effective_shatter_rate(self):
        return self.substitution_rate if self.shatter_rate is None else self.shatter_rate


# -- dialogues ---------------------------------------------------------------

def generate_dialogues(spec, rng=None):
    """Reference conversations with contiguous, non-overlapping utterance spans."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    d2p, p2d = spec.role_transitions()
    pools = {
        "shared": (spec.shared_words, _zipf(len(spec.shared_words))),
        "Doctor": (spec.doctor_words, _zipf(len(spec.doctor_words), 0.7)),
        "Patient": (spec.patient_words, _zipf(len(spec.patient_words), 0.7)),
        "terms": (spec.terms, _zipf(len(spec.terms))),
    }
    conversations = []
    for c in range(spec.n_conversations):
        conv_id = f"conv{c:04d}"
        lo, hi = spec.utterances_per_conversation
        n_utts = int(rng.integers(lo, hi + 1))
        role = "Doctor" if rng.random() < spec.doctor_prior else "Patient"
        t = 0.0
        utts = []
        for u in range(n_utts):
            if u:
                switch = d2p if role == "Doctor" else p2d
                if rng.random() < switch:
                    role = "Patient" if role == "Doctor" else "Doctor"
            tokens = _sample_tokens(spec, role, pools, rng)
            end = t + spec.seconds_per_token * len(tokens)
            utts.append(Utterance(conv_id, f"utt{u:04d}", role, round(t, 6), round(end, 6), tokens))
            t = end + spec.gap_seconds
        conversations.append(Conversation(conv_id, utts))
    return conversations


def _sample_tokens(spec, role, pools, rng):
    lo, hi = spec.tokens_per_utterance
    n = int(rng.integers(lo, hi + 1))
    term_rate = spec.doctor_term_rate if role == "Doctor" else spec.patient_term_rate
    out = []
    for _ in range(n):
        r = rng.random()
        if r < term_rate:
            pool = pools["terms"]
        elif r < term_rate + spec.role_word_rate:
            pool = pools[role]
        else:
            pool = pools["shared"]
        words, probs = pool
        out.append(words[int(rng.choice(len(words), p=probs))])
    return out


# -- corruption channel ------------------------------------------------------

def corrupt_tokens(tokens, channel, rng, sub_vocab):
    """Channel outputs for one token sequence.

    Returns one list per source token of ``(word, kind)`` with kind in
    keep/sub/shatter/ins; a deleted token has no ``keep``/``sub`` entry.
    """
    shatter_p = channel.effective_shatter_rate
    out = []
    for tok in tokens:
        emitted = []
        rule = channel.shatter_rules.get(tok)
        if rule is not None and rng.random() < shatter_p:
            k = int(rng.choice(len(rule), p=[w for _, w in rule]))
            emitted.extend((w, "shatter") for w in rule[k][0])
        else:
            r = rng.random()
            if r < channel.deletion_rate:
                pass
            elif r < channel.deletion_rate + channel.substitution_rate and len(sub_vocab) > 1:
                choice = tok
                while choice == tok:
                    choice = sub_vocab[int(rng.integers(len(sub_vocab)))]
                emitted.append((choice, "sub"))
            else:
                emitted.append((tok, "keep"))
        if channel.insertion_vocab and rng.random() < channel.insertion_rate:
            emitted.append((channel.insertion_vocab[int(rng.integers(len(channel.insertion_vocab)))],
                            "ins"))
        out.append(emitted)
    return out


def _substitution_vocab(reference, channel):
    if channel.substitution_vocab is not None:
        return list(channel.substitution_vocab)
    terms = set(channel.shatter_rules)
    seen = sorted({t for conv in reference for u in conv.utterances for t in u.tokens} - terms)
    return seen


def corrupt(reference, channel, rng=None):
    """Timed ASR words per conversation for the reference dialogues.

    Each conversation draws from its own child stream of ``channel.seed``
    (or of ``rng`` when given), so results do not depend on processing order.
    """
    sub_vocab = _substitution_vocab(reference, channel)
    root = np.random.SeedSequence(channel.seed) if rng is None else \
        np.random.SeedSequence(int(rng.integers(2 ** 63)))
    children = root.spawn(len(reference))
    out = {}
    for conv, child in zip(reference, children):
        crng = np.random.default_rng(child)
        # timing jitter has its own stream so switching it on keeps the words
        jrng = np.random.default_rng(child.spawn(1)[0]) if channel.jitter else None
        words = []
        for u in conv.utterances:
            n = len(u.tokens)
            if n == 0:
                continue
            step = (u.end - u.start) / n
            per_token = corrupt_tokens(u.tokens, channel, crng, sub_vocab)
            for i, emitted in enumerate(per_token):
                if not emitted:
                    continue
                t0 = u.start + i * step
                piece = step / len(emitted)
                for j, (w, _) in enumerate(emitted):
                    s, e = t0 + j * piece, t0 + (j + 1) * piece
                    if channel.jitter:
                        s, e = _jitter(s, e, piece, t0, t0 + step, jrng)
                    words.append(WordToken(w, round(s, 6), round(e, 6)))
        out[conv.conv_id] = words
    return out


def _jitter(s, e, piece, lo, hi, rng):
    shift = rng.uniform(-0.2, 0.2) * piece
    s2 = min(max(s + shift, lo), hi)
    e2 = min(max(e + shift, lo), hi)
    if e2 <= s2:
        return s, e
    return s2, e2


def emit_corpus(reference, corrupted, out_dir):
    """Write ``reference.jsonl`` and ``asr_<variant>.jsonl`` per channel output."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {"reference": os.path.join(out_dir, "reference.jsonl")}
    write_reference(reference, paths["reference"])
    for variant, words in corrupted.items():
        paths[variant] = os.path.join(out_dir, f"asr_{variant}.jsonl")
        write_asr_words(words, paths[variant])
    return paths


def write_ontology(path, terms, extra=("vitamin d", "fish oil", "x", "co q10")):
    """A toy ontology: the single-word terms plus entries the lexicon filters must drop."""
    with open(path, "w", encoding="utf-8") as fh:
        for name in list(terms) + list(extra):
            fh.write(name.capitalize() + "\n")


# -- config ------------------------------------------------------------------

def default_config(seed=0):
    return {
        "seed": seed,
        "dialogue": dataclasses.asdict(DialogueSpec(seed=seed)),
        "channels": {
            "google": dataclasses.asdict(ChannelSpec(seed=seed + 1)),
            "aspire": dataclasses.asdict(ChannelSpec(
                substitution_rate=0.08, deletion_rate=0.04, insertion_rate=0.02,
                shatter_rate=0.7, seed=seed + 2)),
        },
    }


def parse_config(cfg):
    """``(DialogueSpec, {variant: ChannelSpec})`` from a config mapping."""
    try:
        dialogue = DialogueSpec(**cfg.get("dialogue", {}))
        channels = {name: ChannelSpec(**spec) for name, spec in cfg.get("channels", {}).items()}
    except TypeError as exc:
        raise ConfigError(f"bad simulation config: {exc}") from None
    if not channels:
        raise ConfigError("simulation config defines no channels")
    return dialogue, channels


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def simulate(cfg, out_dir):
    """Generate, corrupt and write a whole synthetic corpus; returns file paths."""
    dialogue, channels = parse_config(cfg)
    reference = generate_dialogues(dialogue)
    corrupted = {name: corrupt(reference, ch) for name, ch in channels.items()}
    paths = emit_corpus(reference, corrupted, out_dir)
    paths["ontology"] = os.path.join(out_dir, "ontology.txt")
    write_ontology(paths["ontology"], dialogue.terms)
    return paths
