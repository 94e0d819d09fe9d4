"""Markdown tables for a set of evaluation reports.

Report names follow ``<asr variant>/<system>``, e.g. ``google/raw`` or
``google/s2s``; the reference transcript row uses ``reference/reference``.
"""
from __future__ import annotations

from collections import OrderedDict

SYSTEM_LABELS = OrderedDict([
    ("reference", "Reference text"),
    ("raw", "ASR output"),
    ("confusion", "Confusion-table adapted"),
    ("s2s", "S2S adapted"),
])


def _split(name):
    variant, _, system = name.partition("/")
    return variant, system or "raw"


def _order(reports):
    by_variant = OrderedDict()
    for r in reports:
        variant, system = _split(r.name)
        by_variant.setdefault(variant, {})[system] = r
    rank = {s: i for i, s in enumerate(SYSTEM_LABELS)}
    for variant, systems in by_variant.items():
        by_variant[variant] = OrderedDict(sorted(systems.items(), key=lambda kv: rank.get(kv[0], 99)))
    return by_variant


def _label(system):
    return SYSTEM_LABELS.get(system, system)


def transcript_table(reports):
    lines = ["| ASR | Transcript | WER (lower) | BLEU (higher) |", "|---|---|---:|---:|"]
    for variant, systems in _order(reports).items():
        for system, r in systems.items():
            if system == "reference":
                continue
            lines.append(f"| {variant} | {_label(system)} | {100 * r.wer:.1f} | {100 * r.bleu:.1f} |")
    return "\n".join(lines)


def term_table(reports):
    lines = ["| ASR | Transcript | P | R | F1 | macro F1 |", "|---|---|---:|---:|---:|---:|"]
    for variant, systems in _order(reports).items():
        for system, r in systems.items():
            if system == "reference" or r.term is None:
                continue
            macro = "-" if r.term_macro_f1 is None else f"{r.term_macro_f1:.2f}"
            lines.append(f"| {variant} | {_label(system)} | {r.term.precision:.2f} | "
                         f"{r.term.recall:.2f} | {r.term.f1:.2f} | {macro} |")
    return "\n".join(lines)


def diarization_table(reports):
    lines = ["| Model/Transcript | P (Patient, Doctor) | R (Patient, Doctor) | F1 (Patient, Doctor) |",
             "|---|---|---|---|"]
    for variant, systems in _order(reports).items():
        for system, r in systems.items():
            if not r.diarization:
                continue
            pa, do = r.diarization["Patient"], r.diarization["Doctor"]
            label = _label(system) if variant == "reference" else f"{variant} {_label(system)}"
            lines.append(f"| {label} | {pa.precision:.2f}, {do.precision:.2f} | "
                         f"{pa.recall:.2f}, {do.recall:.2f} | {pa.f1:.2f}, {do.f1:.2f} |")
    return "\n".join(lines)


def frequent_terms_table(reports, lexicon, n=3, before="raw", after="s2s"):
    """Per-term P/R/F1 for the ``n`` most and least frequent lexicon terms."""
    terms = lexicon.words
    if not terms:
        return "(empty lexicon)"
    most = terms[:n]
    least = [t for t in reversed(terms) if t not in most][:n][::-1]
    blocks = []
    for variant, systems in _order(reports).items():
        if before not in systems or after not in systems:
            continue
        a, b = systems[before], systems[after]
        lines = [f"**{variant}** ({_label(before)}, {_label(after)})", "",
                 "| Term | P | R | F1 |", "|---|---|---|---|"]
        for title, group in (("Most frequent", most), ("Least frequent", least)):
            lines.append(f"| *{title}* | | | |")
            for t in group:
                pa, pb = a.per_term.get(t), b.per_term.get(t)
                cells = []
                for attr in ("precision", "recall", "f1"):
                    va = "-" if pa is None else f"{getattr(pa, attr):.2f}"
                    vb = "-" if pb is None else f"{getattr(pb, attr):.2f}"
                    cells.append(f"{va}, {vb}")
                lines.append(f"| {t} | " + " | ".join(cells) + " |")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) if blocks else "(no raw/adapted report pairs)"


def render_markdown(reports, lexicon=None):
    parts = ["# Evaluation report", "",
             "## Transcript quality", "", transcript_table(reports), "",
             "## Domain-term precision/recall/F1", "", term_table(reports), ""]
    if any(r.diarization for r in reports):
        parts += ["## Speaker-role classification", "", diarization_table(reports), ""]
    if lexicon is not None:
        parts += ["## Most and least frequent terms", "", frequent_terms_table(reports, lexicon), ""]
    return "\n".join(parts)
