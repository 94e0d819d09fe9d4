"""Gradient-descent updates with global-norm clipping."""
from __future__ import annotations

import numpy as np


def clip_grad_norm(grads, clip):
    """Rescale ``grads`` in place so their joint L2 norm is at most ``clip``.

    Returns the norm measured before clipping.
    """
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if clip is not None and clip > 0 and norm > clip:
        scale = clip / norm
        for name in grads:
            grads[name] = grads[name] * scale
    return norm


def collect_grads(params):
    return {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in params.items()}


def zero_grads(params):
    for p in params.values():
        p.grad = None


class SGD:
    def __init__(self, params, lr=0.1, clip=5.0):
        self.params = params
        self.lr = lr
        self.clip = clip

    def step(self):
        grads = collect_grads(self.params)
        norm = clip_grad_norm(grads, self.clip)
        for name, p in self.params.items():
            p.data -= self.lr * grads[name]
        return norm


class Adam:
    def __init__(self, params, lr=1e-3, clip=5.0, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.clip = clip
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        grads = collect_grads(self.params)
        norm = clip_grad_norm(grads, self.clip)
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name in sorted(self.params):
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            self.params[name].data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm


def sgd_update(params, grads, lr, clip):
    """Functional SGD step on plain arrays; returns new arrays."""
    grads = dict(grads)
    clip_grad_norm(grads, clip)
    return {k: params[k] - lr * grads[k] for k in params}


def make_optimizer(name, params, lr, clip):
    if name == "adam":
        return Adam(params, lr=lr, clip=clip)
    if name == "sgd":
        return SGD(params, lr=lr, clip=clip)
    raise ValueError(f"unknown optimizer {name!r}")
