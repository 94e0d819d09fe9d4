"""ASR hypothesis -> reference-style correction models.

Two estimators share the sklearn ``fit``/``predict`` surface, where ``X``
is a list of hypothesis token lists and ``y`` the matching reference token
lists:

* :class:`Seq2SeqCorrector`: word-level attentional encoder-decoder
* :class:`ConfusionTableCorrector`: phrase substitution table read off
  training-set edit alignments
"""
from __future__ import annotations

import json
import logging
import os
from collections import Counter

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import nn
from .corpus import ParallelPair
from .metrics import Op, edit_align
from .nn.layers import (
    ParamSpec, additive_attention, additive_attention_specs, affine, affine_specs, blstm,
    blstm_specs, lstm, lstm_specs, lstm_step, masked_mean,
)
from .nn.tensor import (
    Tensor, add, concat, cross_entropy, embedding, log_softmax_array, matmul, matmul_t, no_grad,
    stack, tanh,
)
from .validation import check_token_lists

log = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
RESERVED = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = range(4)


class TrainingDivergedError(FloatingPointError):
    pass


class Vocab:
    """Token <-> index bijection with PAD/BOS/EOS/UNK fixed at 0-3."""

    def __init__(self, tokens=()):
        self.itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.stoi = {t: i for i, t in enumerate(self.itos)}

    @classmethod
    def build(cls, sequences, cap=None):
        counts = Counter(t for seq in sequences for t in seq)
        ranked = sorted((t for t in counts if t not in RESERVED), key=lambda t: (-counts[t], t))
        if cap is not None:
            ranked = ranked[:max(cap - len(RESERVED), 0)]
        return cls(ranked)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def encode(self, tokens):
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids):
        return [self.itos[i] for i in ids]


def build_vocab(pairs, cap=None):
    """Source and target vocabularies from training pairs."""
    pairs = list(pairs)
    return (Vocab.build((p.source for p in pairs), cap),
            Vocab.build((p.target for p in pairs), cap))


def _pad(seqs, pad_to_one=True):
    T = max([len(s) for s in seqs] + [1 if pad_to_one else 0])
    ids = np.full((len(seqs), T), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), T))
    for b, s in enumerate(seqs):
        ids[b, :len(s)] = s
        mask[b, :len(s)] = 1.0
    return ids, mask


def _source_batch(seqs):
    # an empty source becomes a single visible PAD position
    seqs = [s if s else [PAD_ID] for s in seqs]
    return _pad(seqs)


class Seq2SeqCorrector(BaseEstimator):
    """Attentional encoder-decoder over word tokens.

    The encoder stacks ``encoder_layers`` recurrent layers, the first one
    bidirectional. A single-layer decoder attends over the encoder states
    with additive attention and feeds the context back into its input.
    """

    def __init__(self, embedding_dim=32, hidden_dim=64, attention_dim=None, encoder_layers=2,
                 batch_size=16, learning_rate=1e-3, optimizer="adam", clip=5.0, max_epochs=30,
                 patience=3, vocab_size=20000, validation_fraction=0.1, beam_size=1,
                 max_len_ratio=2.0, tie_embeddings=True, random_state=0, verbose=False):
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim
        self.attention_dim = attention_dim
        self.encoder_layers = encoder_layers
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.clip = clip
        self.max_epochs = max_epochs
        self.patience = patience
        self.vocab_size = vocab_size
        self.validation_fraction = validation_fraction
        self.beam_size = beam_size
        self.max_len_ratio = max_len_ratio
        self.tie_embeddings = tie_embeddings
        self.random_state = random_state
        self.verbose = verbose

    # -- parameters --------------------------------------------------------

    def _param_specs(self, n_src, n_tgt):
        if self.encoder_layers < 1:
            raise ValueError("encoder_layers must be >= 1")
        E, H = self.embedding_dim, self.hidden_dim
        A = self.attention_dim or H
        # attention values: top encoder state plus the raw source embedding
        D = (2 * H if self.encoder_layers == 1 else H) + E
        if self.tie_embeddings:
            specs = {"emb": ParamSpec((n_src, E)), "out.b": ParamSpec((n_tgt,), "zeros")}
            specs.update(affine_specs("pre", H + D, E))
        else:
            specs = {"src_emb": ParamSpec((n_src, E)), "tgt_emb": ParamSpec((n_tgt, E))}
            specs.update(affine_specs("out", H + D, n_tgt))
        specs.update(blstm_specs("enc0", E, H))
        for layer in range(1, self.encoder_layers):
            specs.update(lstm_specs(f"enc{layer}", 2 * H if layer == 1 else H, H))
        specs.update(affine_specs("bridge", D, H))
        specs.update(additive_attention_specs("attn", D, H, A))
        specs.update(lstm_specs("dec", E + D, H))
        return specs

    def _emb(self, side):
        p = self.params_
        return p["emb"] if self.tie_embeddings else p[f"{side}_emb"]

    def _logits(self, feats):
        p = self.params_
        if self.tie_embeddings:
            return add(matmul_t(tanh(affine(feats, p, "pre")), p["emb"]), p["out.b"])
        return affine(feats, p, "out")

    def _init_model(self, n_src, n_tgt, rng):
        self.params_ = nn.init_params(self._param_specs(n_src, n_tgt), rng)

    # -- forward pieces ----------------------------------------------------

    def _encode(self, src_ids, src_mask):
        p = self.params_
        x = embedding(self._emb("src"), src_ids)
        h = blstm(x, p, "enc0", mask=src_mask)
        for layer in range(1, self.encoder_layers):
            h = lstm(h, p, f"enc{layer}", mask=src_mask)
        h = concat([h, x], axis=-1)
        keys = add(matmul(h, p["attn.W_k"]), p["attn.b_k"])
        h0 = tanh(affine(masked_mean(h, src_mask), p, "bridge"))
        c0 = Tensor(np.zeros(h0.shape))
        return h, keys, h0, c0

    def _step(self, prev_ids, h, c, enc, keys, src_mask):
        p = self.params_
        e = embedding(self._emb("tgt"), prev_ids)
        weights, ctx = additive_attention(h, keys, enc, p, "attn", mask=src_mask)
        h, c = lstm_step(concat([e, ctx], axis=1), h, c, p, "dec")
        return h, c, concat([h, ctx], axis=1), weights

    def _batch_loss(self, src_seqs, tgt_seqs, return_logits=False):
        src_ids, src_mask = _source_batch(src_seqs)
        dec_in, _ = _pad([[BOS_ID] + t for t in tgt_seqs])
        dec_out, out_mask = _pad([t + [EOS_ID] for t in tgt_seqs])
        enc, keys, h, c = self._encode(src_ids, src_mask)
        feats = []
        for t in range(dec_in.shape[1]):
            h, c, f, _ = self._step(dec_in[:, t], h, c, enc, keys, src_mask)
            feats.append(f)
        logits = self._logits(stack(feats, axis=1))
        if return_logits:
            return logits.data, dec_out, out_mask
        return cross_entropy(logits, dec_out, out_mask), float(out_mask.sum())

    def loss(self, X, y):
        """Teacher-forced mean token cross-entropy (a graph-recording Tensor)."""
        src = [self.source_vocab_.encode(s) for s in X]
        tgt = [self.target_vocab_.encode(t) for t in y]
        return self._batch_loss(src, tgt)[0]

    def token_accuracy(self, X, y):
        """Teacher-forced next-token accuracy over target tokens plus EOS."""
        self._check_fitted()
        X, y = check_token_lists(X, y)
        src = [self.source_vocab_.encode(s) for s in X]
        tgt = [self.target_vocab_.encode(t) for t in y]
        hit = total = 0.0
        with no_grad():
            for start in range(0, len(src), 64):
                logits, gold, mask = self._batch_loss(src[start:start + 64], tgt[start:start + 64],
                                                      return_logits=True)
                hit += float(((logits.argmax(-1) == gold) * mask).sum())
                total += float(mask.sum())
        return hit / total if total else float("nan")

    # -- training ----------------------------------------------------------

    def fit(self, X, y, X_valid=None, y_valid=None):
        X, y = check_token_lists(X, y)
        if not X:
            raise ValueError("Seq2SeqCorrector.fit needs at least one training pair")
        rng = nn.make_rng(self.random_state)
        if X_valid is None:
            X, y, X_valid, y_valid = _holdout(X, y, self.validation_fraction, rng)
        else:
            X_valid, y_valid = check_token_lists(X_valid, y_valid)

        if self.tie_embeddings:
            self.source_vocab_ = self.target_vocab_ = Vocab.build(X + y, self.vocab_size)
        else:
            self.source_vocab_ = Vocab.build(X, self.vocab_size)
            self.target_vocab_ = Vocab.build(y, self.vocab_size)
        self._init_model(len(self.source_vocab_), len(self.target_vocab_), rng)
        opt = nn.make_optimizer(self.optimizer, self.params_, self.learning_rate, self.clip)

        src = [self.source_vocab_.encode(s) for s in X]
        tgt = [self.target_vocab_.encode(t) for t in y]
        vsrc = [self.source_vocab_.encode(s) for s in X_valid]
        vtgt = [self.target_vocab_.encode(t) for t in y_valid]

        self.history_, self.loss_curve_ = [], []
        best, best_state, stale = np.inf, None, 0
        for epoch in range(1, self.max_epochs + 1):
            order = rng.permutation(len(src))
            total, count = 0.0, 0.0
            for b, start in enumerate(range(0, len(order), self.batch_size)):
                idx = order[start:start + self.batch_size]
                nn.zero_grads(self.params_)
                loss, ntok = self._batch_loss([src[i] for i in idx], [tgt[i] for i in idx])
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDivergedError(
                        f"non-finite training loss at epoch {epoch}, batch {b}")
                loss.backward()
                opt.step()
                self.loss_curve_.append(value)
                total += value * ntok
                count += ntok
            valid_loss = self._eval_loss(vsrc, vtgt)
            if not np.isfinite(valid_loss):
                raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
            self.history_.append({"epoch": epoch, "train_loss": total / count,
                                  "valid_loss": valid_loss})
            if self.verbose:
                log.info("epoch %d train %.4f valid %.4f", epoch, total / count, valid_loss)
            if valid_loss < best:
                best, stale = valid_loss, 0
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

    def _eval_loss(self, src, tgt):
        if not src:
            return float("nan")
        total = count = 0.0
        with no_grad():
            for start in range(0, len(src), 64):
                loss, ntok = self._batch_loss(src[start:start + 64], tgt[start:start + 64])
                total += float(loss.data) * ntok
                count += ntok
        return total / count

    # -- decoding ----------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("Seq2SeqCorrector is not fitted yet")

    def _max_len(self, source):
        return int(self.max_len_ratio * len(source)) + 5

    def _finalize(self, ids, attn, source):
        out = []
        for tok, w in zip(ids, attn):
            if tok == UNK_ID:
                if source:
                    out.append(source[int(np.argmax(w[:len(source)]))])
                continue
            out.append(self.target_vocab_.itos[tok])
        return out

    def _greedy_ids(self, sources, max_lens):
        src_ids, src_mask = _source_batch([self.source_vocab_.encode(s) for s in sources])
        B = len(sources)
        steps = max(max_lens) if max_lens else 0
        outs = [[] for _ in range(B)]
        attns = [[] for _ in range(B)]
        logps = [0.0] * B
        if steps == 0:
            return outs, attns, logps
        with no_grad():
            enc, keys, h, c = self._encode(src_ids, src_mask)
            prev = np.full(B, BOS_ID, dtype=np.int64)
            done = np.array([m == 0 for m in max_lens])
            for t in range(steps):
                h, c, f, w = self._step(prev, h, c, enc, keys, src_mask)
                lp = log_softmax_array(self._logits(f).data, axis=-1)
                nxt = lp.argmax(axis=1)
                for b in range(B):
                    if done[b]:
                        continue
                    logps[b] += lp[b, nxt[b]]
                    if nxt[b] == EOS_ID:
                        done[b] = True
                        continue
                    outs[b].append(int(nxt[b]))
                    attns[b].append(w.data[b])
                    if len(outs[b]) >= max_lens[b]:
                        done[b] = True
                if done.all():
                    break
                prev = nxt
        return outs, attns, logps

    def decode_greedy(self, source, max_len=None):
        """Argmax decoding of one source; UNK copies the most-attended source token."""
        self._check_fitted()
        source = list(source)
        max_len = self._max_len(source) if max_len is None else max_len
        ids, attn, _ = self._greedy_ids([source], [max_len])
        return self._finalize(ids[0], attn[0], source)

    def decode_beam(self, source, beam_size=4, max_len=None, return_score=False):
        """Beam search ranked by length-normalized log-probability.

        The greedy hypothesis always competes in the final ranking, so the
        returned score is never below the greedy one.
        """
        self._check_fitted()
        source = list(source)
        max_len = self._max_len(source) if max_len is None else max_len
        g_ids, g_attn, g_lp = self._greedy_ids([source], [max_len])
        g_len = len(g_ids[0]) + (1 if len(g_ids[0]) < max_len else 0)
        best = (g_lp[0] / max(g_len, 1), g_ids[0], g_attn[0])
        if beam_size > 1 and max_len > 0:
            cand = self._beam_search(source, beam_size, max_len)
            if cand is not None and cand[0] > best[0]:
                best = cand
        tokens = self._finalize(best[1], best[2], source)
        return (tokens, best[0]) if return_score else tokens

    def _beam_search(self, source, beam_size, max_len):
        src_ids, src_mask = _source_batch([self.source_vocab_.encode(source)])
        finished = []
        with no_grad():
            enc, keys, h, c = self._encode(src_ids, src_mask)
            # hypotheses: (logp, ids, attn rows)
            beams = [(0.0, [], [])]
            for t in range(max_len):
                k = len(beams)
                prev = np.array([b[1][-1] if b[1] else BOS_ID for b in beams], dtype=np.int64)
                h_new, c_new, f, w = self._step(
                    prev, h, c, Tensor(np.repeat(enc.data, k, axis=0)),
                    Tensor(np.repeat(keys.data, k, axis=0)), np.repeat(src_mask, k, axis=0))
                lp = log_softmax_array(self._logits(f).data, axis=-1)
                scored = []
                for i, (base, ids, att) in enumerate(beams):
                    top = np.argsort(-lp[i], kind="stable")[:beam_size]
                    scored.extend((base + lp[i, tok], i, int(tok)) for tok in top)
                scored.sort(key=lambda s: -s[0])
                nxt, keep = [], []
                for score, i, tok in scored:
                    ids, att = beams[i][1], beams[i][2]
                    if tok == EOS_ID:
                        finished.append((score / (len(ids) + 1), ids, att))
                    else:
                        row = w.data[i]
                        if len(ids) + 1 >= max_len:
                            finished.append((score / (len(ids) + 1), ids + [tok], att + [row]))
                        else:
                            nxt.append((score, ids + [tok], att + [row]))
                            keep.append(i)
                    if len(nxt) == beam_size:
                        break
                if not nxt or len(finished) >= beam_size:
                    break
                beams = nxt
                h = Tensor(h_new.data[keep])
                c = Tensor(c_new.data[keep])
        if not finished:
            return None
        return max(finished, key=lambda f: f[0])

    def predict(self, X, beam_size=None):
        self._check_fitted()
        X = check_token_lists(X)
        beam = self.beam_size if beam_size is None else beam_size
        if beam > 1:
            return [self.decode_beam(s, beam) for s in X]
        out = []
        for start in range(0, len(X), 64):
            chunk = [list(s) for s in X[start:start + 64]]
            ids, attn, _ = self._greedy_ids(chunk, [self._max_len(s) for s in chunk])
            out.extend(self._finalize(i, a, s) for i, a, s in zip(ids, attn, chunk))
        return out

    def score(self, X, y):
        """Word accuracy, ``1 - WER`` of the corrected hypotheses."""
        from .metrics import corpus_wer
        return 1.0 - corpus_wer(zip(self.predict(X), y))

    # -- persistence -------------------------------------------------------

    def save(self, directory, meta=None):
        self._check_fitted()
        os.makedirs(directory, exist_ok=True)
        nn.save_arrays(os.path.join(directory, "model.ckpt"),
                       {k: p.data for k, p in self.params_.items()}, meta={"kind": "s2s"})
        sidecar = {"kind": "s2s", "params": self.get_params(),
                   "source_vocab": self.source_vocab_.itos[len(RESERVED):],
                   "target_vocab": self.target_vocab_.itos[len(RESERVED):],
                   "history": self.history_, "best_epoch": self.best_epoch_}
        if meta:
            sidecar["meta"] = meta
        _write_json(os.path.join(directory, "model.json"), sidecar)

    @classmethod
    def load(cls, directory):
        sidecar = _read_json(os.path.join(directory, "model.json"))
        arrays, _ = nn.load_arrays(os.path.join(directory, "model.ckpt"))
        model = cls(**sidecar["params"])
        model.source_vocab_ = Vocab(sidecar["source_vocab"])
        model.target_vocab_ = (model.source_vocab_ if model.tie_embeddings
                               else Vocab(sidecar["target_vocab"]))
        model.history_ = sidecar.get("history", [])
        model.best_epoch_ = sidecar.get("best_epoch")
        model.loss_curve_ = []
        model.params_ = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
        return model


def _holdout(X, y, fraction, rng):
    n = len(X)
    n_valid = int(n * fraction)
    if n_valid < 1 or n - n_valid < 1:
        return X, y, X, y
    order = rng.permutation(n)
    valid, train = sorted(order[:n_valid]), sorted(order[n_valid:])
    return ([X[i] for i in train], [y[i] for i in train],
            [X[i] for i in valid], [y[i] for i in valid])


# -- confusion-table baseline ----------------------------------------------

def _error_runs(alignment):
    """Maximal runs of non-Match edits as (hyp positions, ref tokens)."""
    runs, hyp_pos, ref_tok = [], [], []
    for e in alignment.ops:
        if e.op is Op.MATCH:
            if hyp_pos or ref_tok:
                runs.append((hyp_pos, ref_tok))
            hyp_pos, ref_tok = [], []
            continue
        if e.hyp_index is not None:
            hyp_pos.append(e.hyp_index)
        if e.ref_token is not None:
            ref_tok.append(e.ref_token)
    if hyp_pos or ref_tok:
        runs.append((hyp_pos, ref_tok))
    return runs


class ConfusionTableCorrector(BaseEstimator):
    """Substitution table from training alignments.

    Error runs between matches are harvested as 1->1 substitutions (runs of
    equal length are split pairwise), 2->1 merges ("cool midi" ->
    "coumadin") and 1->2 splits. A source unigram or bigram is rewritten to
    its most probable target when that probability exceeds ``threshold``;
    bigrams are tried first.
    """

    def __init__(self, min_count=2, threshold=0.5):
        self.min_count = min_count
        self.threshold = threshold

    def fit(self, X, y):
        X, y = check_token_lists(X, y)
        mapped = Counter()
        occurrences = Counter()
        for src, tgt in zip(X, y):
            src = list(src)
            occurrences.update((t,) for t in src)
            occurrences.update(zip(src, src[1:]))
            for hyp_pos, ref_tok in _error_runs(edit_align(src, list(tgt))):
                h = [src[i] for i in hyp_pos]
                if len(h) == len(ref_tok):
                    for a, b in zip(h, ref_tok):
                        mapped[((a,), (b,))] += 1
                elif (len(h), len(ref_tok)) in ((2, 1), (1, 2)):
                    mapped[(tuple(h), tuple(ref_tok))] += 1
        table = {}
        for (key, target), n in mapped.items():
            if n >= self.min_count:
                table.setdefault(key, []).append((target, n / occurrences[key]))
        for key in table:
            table[key].sort(key=lambda tp: (-tp[1], tp[0]))
        self.table_ = table
        return self

    def predict(self, X):
        if not hasattr(self, "table_"):
            raise NotFittedError("ConfusionTableCorrector is not fitted yet")
        return [self.apply(s) for s in check_token_lists(X)]

    def apply(self, source):
        source = list(source)
        out, i = [], 0
        while i < len(source):
            if i + 1 < len(source):
                hit = self._lookup((source[i], source[i + 1]))
                if hit is not None:
                    out.extend(hit)
                    i += 2
                    continue
            hit = self._lookup((source[i],))
            out.extend(hit if hit is not None else [source[i]])
            i += 1
        return out

    def _lookup(self, key):
        entries = self.table_.get(key)
        if entries and entries[0][1] > self.threshold:
            return list(entries[0][0])
        return None

    def save(self, directory, meta=None):
        os.makedirs(directory, exist_ok=True)
        rows = [{"source": list(k), "targets": [[list(t), p] for t, p in v]}
                for k, v in sorted(self.table_.items())]
        sidecar = {"kind": "confusion", "params": self.get_params(), "table": rows}
        if meta:
            sidecar["meta"] = meta
        _write_json(os.path.join(directory, "model.json"), sidecar)

    @classmethod
    def load(cls, directory):
        sidecar = _read_json(os.path.join(directory, "model.json"))
        model = cls(**sidecar["params"])
        model.table_ = {tuple(r["source"]): [(tuple(t), p) for t, p in r["targets"]]
                        for r in sidecar["table"]}
        return model


class IdentityCorrector(BaseEstimator):
    """Leaves hypotheses untouched (the raw-ASR row of a report)."""

    def fit(self, X, y=None):
        return self

    def predict(self, X):
        return [list(s) for s in X]


def load_corrector(directory):
    kind = _read_json(os.path.join(directory, "model.json")).get("kind")
    if kind == "s2s":
        return Seq2SeqCorrector.load(directory)
    if kind == "confusion":
        return ConfusionTableCorrector.load(directory)
    raise ValueError(f"{directory}: unknown corrector kind {kind!r}")


def correct_corpus(model, pairs):
    """Replace each pair's source with the model output; keys and targets kept."""
    pairs = list(pairs)
    outputs = model.predict([p.source for p in pairs])
    return [ParallelPair(p.conv_id, p.utt_id, out, p.target, p.speaker)
            for p, out in zip(pairs, outputs)]


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
