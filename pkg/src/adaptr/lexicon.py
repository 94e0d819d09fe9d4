"""Domain-term (medication) lexicon built from an ontology name list.

Filtering keeps single-word names of at least two characters that occur at
least twice in the reference tokens, ranked by frequency.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass


@dataclass(frozen=True)
class TermLexicon:
    terms: tuple  # ((term, frequency), ...) in rank order
    k: int

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((t, int(f)) for t, f in self.terms))

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __contains__(self, term):
        return term in self.words

    @property
    def words(self):
        return [t for t, _ in self.terms]

    def frequency(self, term):
        return dict(self.terms).get(term, 0)


def load_ontology(path):
    """Names from a UTF-8 file, one per line, trimmed and lowercased.

    Alternative names of one medication stay separate entries.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read ontology {path}: {exc.strerror}") from exc
    return [line.strip().lower() for line in lines if line.strip()]


def count_term(term, tokens):
    return sum(1 for t in tokens if t == term)


def build_term_lexicon(names, reference_tokens, k=200, min_count=2, min_length=2):
    """Rank single-token names by their count in ``reference_tokens``.

    ``reference_tokens`` is an iterable of token sequences (e.g. the
    reference side of the test split).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    candidates = {n for n in names if len(n.split()) == 1 and len(n) >= min_length}
    counts = Counter()
    for tokens in reference_tokens:
        for t in tokens:
            if t in candidates:
                counts[t] += 1
    ranked = sorted(((t, c) for t, c in counts.items() if c >= min_count),
                    key=lambda tc: (-tc[1], tc[0]))
    return TermLexicon(tuple(ranked[:k]), k)


def write_lexicon(lexicon, path):
    with open(path, "w", encoding="utf-8") as fh:
        for term, freq in lexicon:
            fh.write(json.dumps({"term": term, "frequency": freq}) + "\n")


def read_lexicon(path, k=None):
    terms = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "term" not in obj or "frequency" not in obj:
                raise ValueError(f"{path}:{lineno}: lexicon line needs 'term' and 'frequency'")
            terms.append((obj["term"], obj["frequency"]))
    return TermLexicon(tuple(terms), k if k is not None else max(len(terms), 1))
