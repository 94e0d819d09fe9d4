import itertools
import math
from functools import lru_cache

import pytest
from hypothesis import given, strategies as st

from adaptr.lexicon import TermLexicon
from adaptr.metrics import (
    PRF, EvalReport, Op, classification_prf, corpus_bleu, corpus_wer, edit_align, edit_distance,
    evaluate_pairs, term_prf,
)

ROW3_HYP = "we can use cumin in the same way".split()
ROW3_REF = "we can use coumadin the same way".split()


def naive_distance(a, b):
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))
    return d(len(a), len(b))


def all_strings(alphabet, max_len):
    for n in range(max_len + 1):
        yield from itertools.product(alphabet, repeat=n)


def test_edit_distance_matches_recursion_small_exhaustive():
    strings = list(all_strings("abc", 4))
    for a in strings:
        for b in strings:
            assert edit_distance(a, b) == naive_distance(a, b)


@given(st.lists(st.sampled_from("abc"), max_size=6), st.lists(st.sampled_from("abc"), max_size=6))
def test_alignment_distance_and_replay(hyp, ref):
    al = edit_align(hyp, ref)
    assert al.distance == naive_distance(tuple(hyp), tuple(ref))
    c = al.counts()
    assert c[Op.SUBSTITUTE] + c[Op.INSERT] + c[Op.DELETE] == al.distance
    assert al.replay() == ref
    assert [e.hyp_token for e in al.ops if e.hyp_index is not None] == hyp


def test_identity_alignment():
    al = edit_align(["a", "b"], ["a", "b"])
    assert al.distance == 0
    assert [e.op for e in al.ops] == [Op.MATCH, Op.MATCH]


def test_empty_hypothesis_is_all_deletes():
    al = edit_align([], ["a", "b", "c"])
    assert al.distance == 3
    assert all(e.op is Op.DELETE for e in al.ops)


def test_table1_row3_alignment():
    al = edit_align(ROW3_HYP, ROW3_REF)
    assert al.distance == 2
    c = al.counts()
    assert c[Op.SUBSTITUTE] == 1 and c[Op.INSERT] == 1
    sub = [e for e in al.ops if e.op is Op.SUBSTITUTE][0]
    assert (sub.hyp_token, sub.ref_token) == ("cumin", "coumadin")
    assert [e.hyp_token for e in al.ops if e.op is Op.INSERT] == ["in"]


def test_corpus_wer_cases():
    assert abs(corpus_wer([(ROW3_HYP, ROW3_REF)]) - 2 / 7) < 1e-12
    assert corpus_wer([(["a"], ["a"]), (["b", "c"], ["b", "c"])]) == 0.0
    assert corpus_wer([([], ["a", "b"]), ([], ["c"])]) == 1.0
    # micro-average: total errors over total reference tokens
    assert corpus_wer([(["x"], ["a"]), (["b", "c", "d"], ["b", "c", "d"])]) == 0.25
    with pytest.raises(ValueError):
        corpus_wer([(["a"], [])])


def test_bleu_hand_oracle():
    # p1 = 2/2; p2 = (1+1)/(1+1); p3 = p4 = (0+1)/(0+1); BP = exp(1 - 3/2)
    got = corpus_bleu([(["the", "cat"], ["the", "cat", "sat"])])
    assert abs(got - math.exp(-0.5)) < 1e-12


def test_bleu_identity_and_disjoint():
    pairs = [(ROW3_REF, ROW3_REF), (["a", "b"], ["a", "b"])]
    assert corpus_bleu(pairs) == 1.0
    assert corpus_bleu([(["x", "y", "z"], ["a", "b", "c"])]) == 0.0
    with pytest.raises(ValueError):
        corpus_bleu([])


def test_bleu_smoothed_bigram_oracle():
    # hyp [a b c d] vs ref [a b x d]: p1 3/4, p2 (1+1)/(3+1), p3 (0+1)/(2+1), p4 (0+1)/(1+1)
    want = math.exp((math.log(3 / 4) + math.log(2 / 4) + math.log(1 / 3) + math.log(1 / 2)) / 4)
    got = corpus_bleu([("a b c d".split(), "a b x d".split())])
    assert abs(got - want) < 1e-12


LEX = TermLexicon((("coumadin", 3), ("statin", 2)), 200)


def test_term_prf_identity_is_all_ones():
    pairs = [(["take", "coumadin"], ["take", "coumadin"]), (["statin"], ["statin"])]
    total, per = term_prf(pairs, LEX)
    assert (total.precision, total.recall, total.f1) == (1.0, 1.0, 1.0)
    assert all(p.f1 == 1.0 for p in per.values())


def test_term_prf_counting_oracle():
    pairs = [(["coumadin", "x"], ["coumadin", "coumadin"]), (["coumadin"], ["other"])]
    total, per = term_prf(pairs, LEX)
    assert (total.tp, total.fp, total.fn) == (1, 1, 1)
    assert total.precision == total.recall == total.f1 == 0.5
    assert "statin" not in per


def test_term_prf_vacuous():
    total, per = term_prf([(["a"], ["b"])], LEX)
    assert total.precision == total.recall == 1.0
    assert per == {}


def test_classification_prf_all_majority():
    y = [1] * 7 + [0] * 3
    pred = [1] * 10
    assert classification_prf(y, pred, 1).recall == 1.0
    assert classification_prf(y, pred, 0).recall == 0.0


def test_report_round_trip():
    rep = evaluate_pairs("google/raw", [(ROW3_HYP, ROW3_REF)], LEX)
    rep.diarization = {"Doctor": PRF(3, 1, 0), "Patient": PRF(1, 0, 1)}
    back = EvalReport.from_dict(rep.to_dict())
    assert back.to_dict() == rep.to_dict()
    assert back.term.recall == 0.0 and back.per_term["coumadin"].fn == 1
