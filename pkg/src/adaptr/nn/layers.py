"""Recurrent and attention building blocks shared by the corrector and diarizer.

Weights live in a flat ``dict`` of :class:`Tensor` keyed by name; layer
functions take a ``prefix`` and look up their own entries. LSTM gates are
packed in the order input, forget, cell, output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    DTYPE, Tensor, add, concat, matmul, mul, reshape, sigmoid, softmax, stack, tanh, tsum,
)

MASK_NEG = -1e9


@dataclass(frozen=True)
class ParamSpec:
    shape: tuple
    init: str = "glorot"  # glorot | zeros | lstm_bias


def glorot_range(shape):
    fan_in, fan_out = (shape[0], shape[1]) if len(shape) >= 2 else (shape[0], shape[0])
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(specs, rng):
    """Materialize ``{name: ParamSpec}`` into trainable tensors.

    Names are initialized in sorted order so the draw sequence does not
    depend on dict insertion order.
    """
    params = {}
    for name in sorted(specs):
        spec = specs[name]
        shape = tuple(spec.shape)
        if spec.init == "glorot":
            r = glorot_range(shape)
            data = rng.uniform(-r, r, size=shape)
        elif spec.init == "zeros":
            data = np.zeros(shape, dtype=DTYPE)
        elif spec.init == "lstm_bias":
            data = np.zeros(shape, dtype=DTYPE)
            hidden = shape[0] // 4
            data[hidden:2 * hidden] = 1.0
        else:
            raise ValueError(f"unknown init scheme {spec.init!r} for {name}")
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


def lstm_specs(prefix, input_dim, hidden_dim):
    return {
        f"{prefix}.W_x": ParamSpec((input_dim, 4 * hidden_dim)),
        f"{prefix}.W_h": ParamSpec((hidden_dim, 4 * hidden_dim)),
        f"{prefix}.b": ParamSpec((4 * hidden_dim,), "lstm_bias"),
    }


def blstm_specs(prefix, input_dim, hidden_dim):
    specs = lstm_specs(f"{prefix}.fw", input_dim, hidden_dim)
    specs.update(lstm_specs(f"{prefix}.bw", input_dim, hidden_dim))
    return specs


def affine_specs(prefix, input_dim, output_dim):
    return {f"{prefix}.W": ParamSpec((input_dim, output_dim)),
            f"{prefix}.b": ParamSpec((output_dim,), "zeros")}


def affine(x, params, prefix):
    return add(matmul(x, params[f"{prefix}.W"]), params[f"{prefix}.b"])


def lstm_step(x_t, h_prev, c_prev, params, prefix):
    """One LSTM step on a batch: ``x_t`` (B, D), states (B, H)."""
    W_x, W_h, b = params[f"{prefix}.W_x"], params[f"{prefix}.W_h"], params[f"{prefix}.b"]
    H = W_h.shape[0]
    if x_t.shape[-1] != W_x.shape[0] or h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise ValueError(
            f"{prefix}: dimension mismatch x={x_t.shape} h={h_prev.shape} c={c_prev.shape} "
            f"for W_x={W_x.shape}")
    z = add(add(matmul(x_t, W_x), matmul(h_prev, W_h)), b)
    i = sigmoid(z[:, :H])
    f = sigmoid(z[:, H:2 * H])
    g = tanh(z[:, 2 * H:3 * H])
    o = sigmoid(z[:, 3 * H:])
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


def _hold(new, old, m):
    # keep the old state where the step is padding
    if m is None:
        return new
    return add(mul(new, m), mul(old, 1.0 - m))


def lstm(inputs, params, prefix, mask=None, reverse=False, h0=None, c0=None):
    """Run an LSTM over ``inputs`` (B, T, D); returns hidden states (B, T, H).

    ``mask`` (B, T) marks real positions. Padding positions leave the state
    unchanged, so right-padded batches run correctly in both directions.
    """
    B, T = inputs.shape[0], inputs.shape[1]
    H = params[f"{prefix}.W_h"].shape[0]
    h = h0 if h0 is not None else Tensor(np.zeros((B, H)))
    c = c0 if c0 is not None else Tensor(np.zeros((B, H)))
    steps = range(T - 1, -1, -1) if reverse else range(T)
    outs = [None] * T
    for t in steps:
        h_new, c_new = lstm_step(inputs[:, t, :], h, c, params, prefix)
        m = None if mask is None else mask[:, t:t + 1]
        h, c = _hold(h_new, h, m), _hold(c_new, c, m)
        outs[t] = h
    return stack(outs, axis=1)


def blstm(inputs, params, prefix, mask=None):
    """Bidirectional LSTM: concatenates forward and backward states, width 2H."""
    fw = lstm(inputs, params, f"{prefix}.fw", mask=mask)
    bw = lstm(inputs, params, f"{prefix}.bw", mask=mask, reverse=True)
    return concat([fw, bw], axis=-1)


def mask_bias(mask):
    """Additive score bias: 0 on real positions, a large negative on padding."""
    m = np.asarray(mask, dtype=DTYPE)
    return Tensor((1.0 - m) * MASK_NEG)


def attention_pool(hiddens, W_a, b_a, mask=None):
    """Score each position with ``W_a h + b_a``, softmax over positions, pool.

    ``hiddens`` is (B, M, D). Returns ``(weights (B, M), summary (B, D))``.
    """
    if hiddens.shape[1] == 0:
        raise ValueError("attention_pool needs at least one position")
    B, M, D = hiddens.shape
    scores = reshape(add(matmul(hiddens, W_a), b_a), (B, M))
    if mask is not None:
        scores = add(scores, mask_bias(mask))
    weights = softmax(scores, axis=1)
    summary = tsum(mul(reshape(weights, (B, M, 1)), hiddens), axis=1)
    return weights, summary


def additive_attention(query, keys_proj, values, params, prefix, mask=None):
    """Concat-style attention ``v . tanh(W_k k + W_q q)`` over source positions.

    ``keys_proj`` is the precomputed (B, S, A) key projection, ``query``
    (B, Hq). Returns ``(weights (B, S), context (B, Dv))``.
    """
    B, S, A = keys_proj.shape
    q = reshape(matmul(query, params[f"{prefix}.W_q"]), (B, 1, A))
    e = tanh(add(keys_proj, q))
    scores = reshape(matmul(e, params[f"{prefix}.v"]), (B, S))
    if mask is not None:
        scores = add(scores, mask_bias(mask))
    weights = softmax(scores, axis=1)
    context = tsum(mul(reshape(weights, (B, S, 1)), values), axis=1)
    return weights, context


def additive_attention_specs(prefix, key_dim, query_dim, attn_dim):
    return {
        f"{prefix}.W_k": ParamSpec((key_dim, attn_dim)),
        f"{prefix}.b_k": ParamSpec((attn_dim,), "zeros"),
        f"{prefix}.W_q": ParamSpec((query_dim, attn_dim)),
        f"{prefix}.v": ParamSpec((attn_dim, 1)),
    }


def masked_mean(values, mask):
    """Mean over axis 1 of (B, T, D) restricted to ``mask``; all-masked rows give 0."""
    m = np.asarray(mask, dtype=DTYPE)
    counts = np.maximum(m.sum(axis=1, keepdims=True), 1.0)
    w = Tensor((m / counts)[:, :, None])
    return tsum(mul(values, w), axis=1)


__all__ = [
    "ParamSpec", "init_params", "glorot_range", "lstm_specs", "blstm_specs", "affine_specs",
    "affine", "lstm_step", "lstm", "blstm", "attention_pool", "additive_attention",
    "additive_attention_specs", "masked_mean", "mask_bias",
]
