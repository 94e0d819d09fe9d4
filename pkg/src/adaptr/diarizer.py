"""Doctor/Patient role classifier over windows of consecutive utterances.

Words of each utterance go through an embedding table and a BLSTM; an
attention layer pools them into one vector per utterance. A second BLSTM
runs over the utterance vectors of the window, and a sigmoid on each of its
states gives P(Doctor) for that utterance.
"""
from __future__ import annotations

import json
import logging
import os
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import nn
from .corrector import PAD_ID, Vocab
from .metrics import classification_prf
from .nn.layers import ParamSpec, attention_pool, blstm, blstm_specs
from .nn.tensor import (
    Tensor, add, binary_cross_entropy, embedding, matmul, mul, no_grad, reshape, sigmoid,
)
from .validation import check_windows

log = logging.getLogger(__name__)

DOCTOR, PATIENT = 1, 0
LABELS = {"Doctor": DOCTOR, "Patient": PATIENT}


@dataclass(frozen=True)
class Window:
    conv_id: str
    utt_ids: tuple
    tokens: tuple  # one token tuple per utterance
    labels: tuple


def make_windows(pairs, side="target", size=32):
    """Chunk each conversation's pairs (in input order) into windows of ``size``.

    ``side`` picks the transcript: ``"target"`` (reference) or ``"source"``
    (ASR hypothesis, raw or corrected).
    """
    if size < 1:
        raise ValueError("window size must be >= 1")
    by_conv = OrderedDict()
    for p in pairs:
        by_conv.setdefault(p.conv_id, []).append(p)
    windows = []
    for conv_id, ps in by_conv.items():
        for start in range(0, len(ps), size):
            chunk = ps[start:start + size]
            windows.append(Window(
                conv_id, tuple(p.utt_id for p in chunk),
                tuple(tuple(getattr(p, side)) for p in chunk),
                tuple(LABELS[p.speaker] for p in chunk)))
    return windows


class SpeakerRoleClassifier(BaseEstimator):
    """Hierarchical BLSTM-attention classifier; ``X`` is a list of windows.

    Each window is a list of utterances (token lists); ``y`` holds one
    0/1 label list per window with Doctor = 1.
    """

    def __init__(self, embedding_dim=32, word_hidden=32, utt_hidden=32, batch_size=4,
                 learning_rate=3e-3, optimizer="adam", clip=5.0, max_epochs=20, patience=4,
                 vocab_size=20000, threshold=0.5, validation_fraction=0.1, random_state=0,
                 verbose=False):
        self.embedding_dim = embedding_dim
        self.word_hidden = word_hidden
        self.utt_hidden = utt_hidden
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.clip = clip
        self.max_epochs = max_epochs
        self.patience = patience
        self.vocab_size = vocab_size
        self.threshold = threshold
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.verbose = verbose

    def _param_specs(self, n_vocab):
        E, H1, H2 = self.embedding_dim, self.word_hidden, self.utt_hidden
        specs = {"emb": ParamSpec((n_vocab, E)),
                 "attn.W_a": ParamSpec((2 * H1, 1)), "attn.b_a": ParamSpec((1,), "zeros"),
                 "clf.W_c": ParamSpec((2 * H2, 1)), "clf.b_c": ParamSpec((1,), "zeros")}
        specs.update(blstm_specs("word", E, H1))
        specs.update(blstm_specs("utt", 2 * H1, H2))
        return specs

    # -- forward -----------------------------------------------------------

    def _encode_ids(self, utt_ids):
        """Utterance vectors (b, 2*H1); empty utterances map to zeros."""
        p = self.params_
        has = np.array([1.0 if u else 0.0 for u in utt_ids])
        seqs = [u if u else [PAD_ID] for u in utt_ids]
        M = max(len(u) for u in seqs)
        ids = np.full((len(seqs), M), PAD_ID, dtype=np.int64)
        mask = np.zeros((len(seqs), M))
        for i, u in enumerate(seqs):
            ids[i, :len(u)] = u
            mask[i, :len(u)] = 1.0
        h = blstm(embedding(p["emb"], ids), p, "word", mask=mask)
        _, u = attention_pool(h, p["attn.W_a"], p["attn.b_a"], mask=mask)
        return mul(u, has[:, None])

    def _window_probs(self, utt_ids):
        p = self.params_
        u = self._encode_ids(utt_ids)
        b = u.shape[0]
        hs = blstm(reshape(u, (1, b, u.shape[1])), p, "utt")
        logits = add(matmul(reshape(hs, (b, hs.shape[2])), p["clf.W_c"]), p["clf.b_c"])
        return sigmoid(reshape(logits, (b,)))

    def encode_utterance(self, tokens):
        """The pooled utterance vector for one token list (numpy array)."""
        self._check_fitted()
        with no_grad():
            return self._encode_ids([self.vocab_.encode(tokens)]).data[0]

    def window_loss(self, window, labels):
        """Mean BCE over one window (graph-recording Tensor)."""
        probs = self._window_probs([self.vocab_.encode(u) for u in window])
        return binary_cross_entropy(probs, labels)

    # -- training ----------------------------------------------------------

    def fit(self, X, y, X_valid=None, y_valid=None):
        X, y = check_windows(X, y)
        if not X:
            raise ValueError("SpeakerRoleClassifier.fit needs at least one window")
        rng = nn.make_rng(self.random_state)
        if X_valid is None:
            n_valid = int(len(X) * self.validation_fraction)
            if n_valid >= 1 and len(X) - n_valid >= 1:
                order = rng.permutation(len(X))
                vi, ti = sorted(order[:n_valid]), sorted(order[n_valid:])
                X, y, X_valid, y_valid = ([X[i] for i in ti], [y[i] for i in ti],
                                          [X[i] for i in vi], [y[i] for i in vi])
            else:
                X_valid, y_valid = X, y
        else:
            X_valid, y_valid = check_windows(X_valid, y_valid)

        self.vocab_ = Vocab.build((u for w in X for u in w), self.vocab_size)
        self.params_ = nn.init_params(self._param_specs(len(self.vocab_)), rng)
        opt = nn.make_optimizer(self.optimizer, self.params_, self.learning_rate, self.clip)
        enc = [[self.vocab_.encode(u) for u in w] for w in X]

        self.history_, self.loss_curve_ = [], []
        best, best_state, stale = (-1.0, -np.inf), None, 0
        for epoch in range(1, self.max_epochs + 1):
            order = rng.permutation(len(enc))
            total = 0.0
            for start in range(0, len(order), self.batch_size):
                idx = order[start:start + self.batch_size]
                nn.zero_grads(self.params_)
                loss = None
                for i in idx:
                    li = binary_cross_entropy(self._window_probs(enc[i]), y[i])
                    loss = li if loss is None else add(loss, li)
                loss = mul(loss, 1.0 / len(idx))
                value = float(loss.data)
                if not np.isfinite(value):
                    raise FloatingPointError(f"non-finite diarizer loss at epoch {epoch}")
                loss.backward()
                opt.step()
                self.loss_curve_.append(value)
                total += value * len(idx)
            scores = self.evaluate(X_valid, y_valid)
            f1 = scores["Patient"].f1
            v_loss = self._mean_loss(X_valid, y_valid)
            self.history_.append({"epoch": epoch, "train_loss": total / len(enc),
                                  "valid_loss": v_loss, "valid_patient_f1": f1})
            if self.verbose:
                log.info("epoch %d loss %.4f valid patient F1 %.4f", epoch, total / len(enc), f1)
            # Patient F1 decides; validation loss only breaks ties (e.g. the early
            # all-Doctor phase where F1 is stuck at 0).
            if (f1, -v_loss) > best:
                best, stale = (f1, -v_loss), 0
                best_state = {k: p.data.copy() for k, p in self.params_.items()}
                self.best_epoch_ = epoch
            else:
                stale += 1
                if stale >= self.patience:
                    break
        for k, data in best_state.items():
            self.params_[k].data = data
        nn.zero_grads(self.params_)
        return self

    def _mean_loss(self, X, y):
        with no_grad():
            losses = [float(self.window_loss(w, labels).data) for w, labels in zip(X, y)]
        return float(np.mean(losses)) if losses else 0.0

    # -- inference ---------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("SpeakerRoleClassifier is not fitted yet")

    def predict_proba(self, X):
        """P(Doctor) per utterance, one array per window."""
        self._check_fitted()
        X = check_windows(X)
        with no_grad():
            return [self._window_probs([self.vocab_.encode(u) for u in w]).data.copy()
                    for w in X]

    def predict(self, X, threshold=None):
        t = self.threshold if threshold is None else threshold
        return [(p >= t).astype(int) for p in self.predict_proba(X)]

    def evaluate(self, X, y, threshold=None):
        """Per-role precision/recall/F1 (``{"Doctor": PRF, "Patient": PRF}``)."""
        X, y = check_windows(X, y)
        pred = np.concatenate(self.predict(X, threshold)) if X else np.array([])
        true = np.concatenate([np.asarray(v) for v in y]) if y else np.array([])
        return {"Doctor": classification_prf(true, pred, DOCTOR),
                "Patient": classification_prf(true, pred, PATIENT)}

    # -- persistence -------------------------------------------------------

    def save(self, directory, meta=None):
        self._check_fitted()
        os.makedirs(directory, exist_ok=True)
        nn.save_arrays(os.path.join(directory, "model.ckpt"),
                       {k: p.data for k, p in self.params_.items()}, meta={"kind": "diarizer"})
        sidecar = {"kind": "diarizer", "params": self.get_params(),
                   "vocab": self.vocab_.itos[4:], "history": self.history_,
                   "best_epoch": self.best_epoch_}
        if meta:
            sidecar["meta"] = meta
        with open(os.path.join(directory, "model.json"), "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "model.json"), encoding="utf-8") as fh:
            sidecar = json.load(fh)
        arrays, _ = nn.load_arrays(os.path.join(directory, "model.ckpt"))
        model = cls(**sidecar["params"])
        model.vocab_ = Vocab(sidecar["vocab"])
        model.history_ = sidecar.get("history", [])
        model.best_epoch_ = sidecar.get("best_epoch")
        model.params_ = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
        return model


def classify_window(model, window):
    """P(Doctor) for each utterance of one window."""
    return model.predict_proba([window])[0]


def evaluate_diarizer(model, windows, threshold=0.5):
    """Per-role PRF on :class:`Window` objects."""
    return model.evaluate([w.tokens for w in windows], [w.labels for w in windows], threshold)


def write_predictions(model, windows, path):
    probs = model.predict_proba([w.tokens for w in windows])
    with open(path, "w", encoding="utf-8") as fh:
        for w, p in zip(windows, probs):
            for utt_id, v in zip(w.utt_ids, p):
                fh.write(json.dumps({"conv_id": w.conv_id, "utt_id": utt_id,
                                     "p_doctor": float(v)}) + "\n")
