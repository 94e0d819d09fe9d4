"""Domain adaptation of ASR transcripts with a learned sequence-to-sequence corrector."""
from .corpus import (
    Conversation, CorpusError, ParallelPair, SplitSpec, Utterance, WordToken,
    build_parallel_corpus, split_corpus, tokenize,
)
from .corrector import ConfusionTableCorrector, IdentityCorrector, Seq2SeqCorrector
from .diarizer import SpeakerRoleClassifier, make_windows
from .lexicon import TermLexicon, build_term_lexicon
from .metrics import EvalReport, corpus_bleu, corpus_wer, edit_align, edit_distance, term_prf

__version__ = "0.1.0"

__all__ = [
    "Conversation", "CorpusError", "ParallelPair", "SplitSpec", "Utterance", "WordToken",
    "build_parallel_corpus", "split_corpus", "tokenize", "ConfusionTableCorrector",
    "IdentityCorrector", "Seq2SeqCorrector", "SpeakerRoleClassifier", "make_windows",
    "TermLexicon", "build_term_lexicon", "EvalReport", "corpus_bleu", "corpus_wer",
    "edit_align", "edit_distance", "term_prf",
]
