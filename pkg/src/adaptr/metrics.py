"""WER, corpus BLEU and domain-term precision/recall/F1.

Edit operations use the ASR convention, read as edits turning the
hypothesis into the reference:

* ``Insert``: an extra hypothesis token (removed on replay)
* ``Delete``: a reference token missing from the hypothesis (added on replay)
"""
from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field


class Op(str, enum.Enum):
    MATCH = "Match"
    SUBSTITUTE = "Substitute"
    INSERT = "Insert"
    DELETE = "Delete"


@dataclass(frozen=True)
class Edit:
    op: Op
    hyp_index: int | None
    ref_index: int | None
    hyp_token: str | None
    ref_token: str | None


@dataclass(frozen=True)
class EditAlignment:
    ops: tuple
    distance: int

    def counts(self):
        return Counter(e.op for e in self.ops)

    def replay(self):
        """Apply the edits to the hypothesis; yields the reference tokens."""
        out = []
        for e in self.ops:
            if e.op in (Op.MATCH, Op.SUBSTITUTE, Op.DELETE):
                out.append(e.ref_token)
        return out


def edit_distance(hyp, ref):
    """Unit-cost Levenshtein distance, bit-parallel over ``ref`` (Myers/Hyyro)."""
    m = len(ref)
    if m == 0:
        return len(hyp)
    peq = {}
    for j, r in enumerate(ref):
        peq[r] = peq.get(r, 0) | (1 << j)
    mask, high = (1 << m) - 1, 1 << (m - 1)
    pv, mv, score = mask, 0, m
    for h in hyp:
        eq = peq.get(h, 0)
        xv = eq | mv
        xh = (((eq & pv) + pv) ^ pv) | eq
        ph = mv | ~(xh | pv)
        mh = pv & xh
        if ph & high:
            score += 1
        elif mh & high:
            score -= 1
        ph = (ph << 1) | 1
        mh <<= 1
        pv = (mh | ~(xv | ph)) & mask
        mv = ph & xv
    return score


def edit_align(hyp, ref):
    """Minimal unit-cost alignment of ``hyp`` against ``ref``.

    ``d[i][j]`` is the distance between the suffixes ``hyp[i:]`` and
    ``ref[j:]``; the walk runs left to right and prefers Match, then
    Substitute, Delete, Insert, so ties resolve at the earliest position
    ("cumin in" vs "coumadin": substitute cumin, insert in).
    """
    hyp, ref = list(hyp), list(ref)
    n, m = len(hyp), len(ref)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][m] = n - i
    for j in range(m + 1):
        d[n][j] = m - j
    for i in range(n - 1, -1, -1):
        row, down = d[i], d[i + 1]
        h = hyp[i]
        for j in range(m - 1, -1, -1):
            row[j] = min(down[j + 1] + (h != ref[j]), down[j] + 1, row[j + 1] + 1)

    ops = []
    i = j = 0
    while i < n or j < m:
        here = d[i][j]
        if i < n and j < m and hyp[i] == ref[j] and here == d[i + 1][j + 1]:
            ops.append(Edit(Op.MATCH, i, j, hyp[i], ref[j]))
            i, j = i + 1, j + 1
        elif i < n and j < m and here == d[i + 1][j + 1] + 1:
            ops.append(Edit(Op.SUBSTITUTE, i, j, hyp[i], ref[j]))
            i, j = i + 1, j + 1
        elif j < m and here == d[i][j + 1] + 1:
            ops.append(Edit(Op.DELETE, None, j, None, ref[j]))
            j += 1
        else:
            ops.append(Edit(Op.INSERT, i, None, hyp[i], None))
            i += 1
    return EditAlignment(tuple(ops), d[0][0])


def corpus_wer(pairs):
    """Micro-averaged WER over ``(hyp, ref)`` pairs (may exceed 1)."""
    errors = total = 0
    for hyp, ref in pairs:
        errors += edit_distance(list(hyp), list(ref))
        total += len(ref)
    if total == 0:
        raise ValueError("corpus_wer: the references contain no tokens")
    return errors / total


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(pairs, max_n=4):
    """Corpus BLEU-4 with add-one smoothing on the n >= 2 precisions."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("corpus_bleu: empty corpus")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in pairs:
        hyp, ref = list(hyp), list(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            h, r = _ngrams(hyp, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    if matches[0] == 0:
        return 0.0
    log_p = math.log(matches[0] / totals[0])
    for n in range(1, max_n):
        log_p += math.log((matches[n] + 1) / (totals[n] + 1))
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_p / max_n)


@dataclass(frozen=True)
class PRF:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self):
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def recall(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 1.0

    @property
    def f1(self):
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other):
        return PRF(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self):
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "fp": self.fp, "fn": self.fn}


def term_prf(pairs, lexicon):
    """Occurrence-matched P/R/F1 for every lexicon term.

    Per pair, a term counted ``h`` times in the hypothesis and ``r`` times
    in the reference contributes ``min(h, r)`` true positives and the
    surplus/deficit as false positives/negatives. Returns
    ``(micro_aggregate, {term: PRF})``; terms never seen on either side are
    left out of the per-term map.
    """
    words = list(lexicon.words if hasattr(lexicon, "words") else lexicon)
    if not words:
        raise ValueError("term_prf needs a non-empty lexicon")
    vocab = set(words)
    acc = {t: [0, 0, 0] for t in words}
    for hyp, ref in pairs:
        h = Counter(t for t in hyp if t in vocab)
        r = Counter(t for t in ref if t in vocab)
        for t in h.keys() | r.keys():
            a = acc[t]
            a[0] += min(h[t], r[t])
            a[1] += max(h[t] - r[t], 0)
            a[2] += max(r[t] - h[t], 0)
    per_term = {t: PRF(*acc[t]) for t in words if any(acc[t])}
    total = PRF()
    for prf in per_term.values():
        total = total + prf
    return total, per_term


def classification_prf(y_true, y_pred, positive):
    tp = fp = fn = 0
    for t, p in zip(y_true, y_pred):
        if p == positive and t == positive:
            tp += 1
        elif p == positive:
            fp += 1
        elif t == positive:
            fn += 1
    return PRF(tp, fp, fn)


@dataclass
class EvalReport:
    name: str
    wer: float
    bleu: float
    term: PRF | None = None
    term_macro_f1: float | None = None
    per_term: dict = field(default_factory=dict)
    diarization: dict = field(default_factory=dict)
    n_utterances: int = 0
    n_ref_tokens: int = 0
    n_hyp_tokens: int = 0

    def to_dict(self):
        return {
            "name": self.name,
            "wer": self.wer,
            "bleu": self.bleu,
            "term": self.term.to_dict() if self.term else None,
            "term_macro_f1": self.term_macro_f1,
            "per_term": {t: p.to_dict() for t, p in self.per_term.items()},
            "diarization": {role: p.to_dict() for role, p in self.diarization.items()},
            "n_utterances": self.n_utterances,
            "n_ref_tokens": self.n_ref_tokens,
            "n_hyp_tokens": self.n_hyp_tokens,
        }

    @classmethod
    def from_dict(cls, d):
        def prf(x):
            return PRF(x["tp"], x["fp"], x["fn"]) if x else None
        return cls(
            name=d["name"], wer=d["wer"], bleu=d["bleu"], term=prf(d.get("term")),
            term_macro_f1=d.get("term_macro_f1"),
            per_term={t: prf(v) for t, v in d.get("per_term", {}).items()},
            diarization={r: prf(v) for r, v in d.get("diarization", {}).items()},
            n_utterances=d.get("n_utterances", 0), n_ref_tokens=d.get("n_ref_tokens", 0),
            n_hyp_tokens=d.get("n_hyp_tokens", 0))


def evaluate_pairs(name, hyp_ref_pairs, lexicon=None):
    """Transcript-level metrics for one (variant, split) combination."""
    hyp_ref_pairs = [(list(h), list(r)) for h, r in hyp_ref_pairs]
    report = EvalReport(
        name=name,
        wer=corpus_wer(hyp_ref_pairs),
        bleu=corpus_bleu(hyp_ref_pairs),
        n_utterances=len(hyp_ref_pairs),
        n_ref_tokens=sum(len(r) for _, r in hyp_ref_pairs),
        n_hyp_tokens=sum(len(h) for h, _ in hyp_ref_pairs),
    )
    if lexicon is not None and len(lexicon):
        total, per_term = term_prf(hyp_ref_pairs, lexicon)
        report.term = total
        report.per_term = per_term
        report.term_macro_f1 = (sum(p.f1 for p in per_term.values()) / len(per_term)
                                if per_term else None)
    return report
