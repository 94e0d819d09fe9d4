import json

import numpy as np
import pytest

from adaptr import nn
from adaptr.corpus import ParallelPair
from adaptr.diarizer import (
    SpeakerRoleClassifier, classify_window, evaluate_diarizer, make_windows, write_predictions,
)
from adaptr.nn.layers import blstm
from adaptr.nn.tensor import embedding, no_grad

FILLER = "so well the and it yes okay".split()


def separable_windows(n_windows, rng, size=8):
    X, Y = [], []
    for _ in range(n_windows):
        labels = list((rng.random(size) < 0.7).astype(int))
        utts = []
        for lab in labels:
            toks = list(rng.choice(FILLER, size=rng.integers(2, 5)))
            if lab:
                toks.insert(int(rng.integers(0, len(toks) + 1)), "doctorword")
            utts.append(toks)
        X.append(utts)
        Y.append(labels)
    return X, Y


def tiny():
    X = [[["a", "b"], ["c"], []], [["b"], ["a", "c", "a"]]]
    y = [[1, 0, 1], [0, 1]]
    model = SpeakerRoleClassifier(embedding_dim=3, word_hidden=2, utt_hidden=2, max_epochs=1,
                                  random_state=1)
    return model.fit(X, y, X, y), X, y


def test_diarizer_gradcheck():
    model, X, y = tiny()
    err, per = nn.grad_check(lambda: model.window_loss(X[0], y[0]), model.params_)
    assert err < 1e-4, per


def test_encode_utterance_cases():
    model, _, _ = tiny()
    assert np.all(model.encode_utterance([]) == 0)
    p = model.params_
    ids = np.array([model.vocab_.encode(["a"])])
    with no_grad():
        h = blstm(embedding(p["emb"], ids), p, "word").data[0, 0]
    assert np.allclose(model.encode_utterance(["a"]), h, atol=1e-12)
    assert not np.allclose(model.encode_utterance(["a", "b", "c"]),
                           model.encode_utterance(["c", "b", "a"]))


def test_window_outputs():
    model, _, _ = tiny()
    for b in (1, 2, 5):
        probs = classify_window(model, [["a"]] * b)
        assert probs.shape == (b,) and np.all((probs > 0) & (probs < 1))
    for t in model.params_.values():
        t.data = np.zeros_like(t.data)
    assert np.all(classify_window(model, [["a", "b"], ["c"]]) == 0.5)


def test_separable_control():
    rng = np.random.default_rng(0)
    X, Y = separable_windows(24, rng)
    Xv, Yv = separable_windows(6, rng)
    model = SpeakerRoleClassifier(max_epochs=15, random_state=0).fit(X, Y, Xv, Yv)
    scores = model.evaluate(Xv, Yv)
    assert scores["Patient"].f1 > 0.95 and scores["Doctor"].f1 > 0.95
    # flipped labels: the same structure is learned with the roles swapped
    Yf = [[1 - v for v in w] for w in Y]
    Yvf = [[1 - v for v in w] for w in Yv]
    flipped = SpeakerRoleClassifier(max_epochs=15, random_state=0).fit(X, Yf, Xv, Yvf)
    s = flipped.evaluate(Xv, Yvf)
    assert s["Patient"].f1 > 0.95 and s["Doctor"].f1 > 0.95
    p, pf = np.concatenate(model.predict_proba(Xv)), np.concatenate(flipped.predict_proba(Xv))
    assert np.array_equal(p >= 0.5, pf < 0.5)


def test_evaluate_conventions():
    model, X, y = tiny()
    every = model.evaluate(X, y, threshold=0.0)  # everything Doctor
    assert every["Doctor"].recall == 1.0 and every["Patient"].recall == 0.0
    none = model.evaluate(X, y, threshold=1.0)   # everything Patient
    assert none["Patient"].recall == 1.0 and none["Doctor"].recall == 0.0


def test_make_windows_and_predictions(tmp_path):
    pairs = [ParallelPair("c1" if i < 5 else "c2", f"u{i}", ["x"], ["y", str(i)],
                          "Doctor" if i % 3 else "Patient") for i in range(7)]
    wins = make_windows(pairs, size=2)
    assert [len(w.utt_ids) for w in wins] == [2, 2, 1, 2]
    assert wins[0].tokens == (("y", "0"), ("y", "1")) and wins[0].labels == (0, 1)
    assert make_windows(pairs, side="source", size=32)[0].tokens[0] == ("x",)
    with pytest.raises(ValueError):
        make_windows(pairs, size=0)
    model, _, _ = tiny()
    write_predictions(model, wins, tmp_path / "p.jsonl")
    rows = [json.loads(line) for line in (tmp_path / "p.jsonl").read_text().splitlines()]
    assert [r["utt_id"] for r in rows] == [f"u{i}" for i in range(7)]
    assert all(0 < r["p_doctor"] < 1 for r in rows)
    scores = evaluate_diarizer(model, wins)
    assert set(scores) == {"Doctor", "Patient"}


def test_validation_and_persistence(tmp_path):
    with pytest.raises(ValueError):
        SpeakerRoleClassifier().fit([[["a"]]], [[0, 1]])
    with pytest.raises(ValueError):
        SpeakerRoleClassifier().fit([[["a"]]], [[2]])
    model, X, _ = tiny()
    model.save(tmp_path / "d")
    back = SpeakerRoleClassifier.load(tmp_path / "d")
    for a, b in zip(model.predict_proba(X), back.predict_proba(X)):
        assert np.array_equal(a, b)


def test_training_is_deterministic():
    a, _, _ = tiny()
    b, _, _ = tiny()
    assert a.loss_curve_ == b.loss_curve_
