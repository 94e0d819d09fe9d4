"""Small reverse-mode autodiff over float64 numpy arrays.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure computing vector-Jacobian products. Calling ``loss.backward()``
walks the recorded graph in reverse topological order.
"""
from __future__ import annotations

import contextlib

import numpy as np

DTYPE = np.float64

_state = {"grad_enabled": True, "debug": False}


@contextlib.contextmanager
def no_grad():
    """Run ops without recording the graph (inference)."""
    prev = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = prev


def set_debug(flag: bool) -> None:
    """Trip a FloatingPointError as soon as any op produces NaN/Inf."""
    _state["debug"] = bool(flag)


def is_debug() -> bool:
    return _state["debug"]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{label})"

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topo_order(self)
        self.grad = np.asarray(grad, dtype=DTYPE) if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g
            # interior grads are not needed once propagated
            if node._parents:
                node.grad = None if node is not self else node.grad

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    if _state["debug"] and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced in forward pass")
    out = Tensor(data)
    if _state["grad_enabled"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise -----------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def tanh(a):
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    y = _sigmoid(np.asarray(a.data, dtype=DTYPE))
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a):
    y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,))


def log(a):
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,))


# -- linear algebra / shape ----------------------------------------------

def matmul(a, b):
    """``a @ b`` for ``a`` of any rank >= 1 and a 2-D ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2:
        raise ValueError(f"matmul expects a 2-D right operand, got shape {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ b.data.T
        a2 = a.data.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _make(a.data @ b.data, (a, b), backward)


def matmul_t(a, b):
    """``a @ b.T`` for a 2-D ``b`` (tied output embeddings)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.shape[-1] != b.shape[1]:
        raise ValueError(f"matmul_t dimension mismatch: {a.shape} @ {b.shape}.T")

    def backward(g):
        ga = g @ b.data
        gb = g.reshape(-1, g.shape[-1]).T @ a.data.reshape(-1, a.shape[-1])
        return ga, gb

    return _make(a.data @ b.data.T, (a, b), backward)


def tsum(a, axis=None, keepdims=False):
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(y, (a,), backward)


def mean(a, axis=None):
    n = a.data.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / n)


def reshape(a, shape):
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def getitem(a, key):
    fancy = _is_fancy(key)

    def backward(g):
        out = np.zeros_like(a.data)
        if fancy:
            np.add.at(out, key, g)
        else:
            out[key] = g
        return (out,)

    return _make(a.data[key], (a,), backward)


def _is_fancy(key):
    keys = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in keys)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def embedding(weight, indices):
    """Row lookup ``weight[indices]`` with scatter-add gradient."""
    idx = np.asarray(indices, dtype=np.int64)

    def backward(g):
        out = np.zeros_like(weight.data)
        np.add.at(out, idx.reshape(-1), g.reshape(-1, weight.shape[1]))
        return (out,)

    return _make(weight.data[idx], (weight,), backward)


# -- normalizers and losses -----------------------------------------------

def softmax_array(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax_array(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax(a, axis=-1):
    y = softmax_array(a.data, axis=axis)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (a,), backward)


def log_softmax(a, axis=-1):
    y = log_softmax_array(a.data, axis=axis)

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _make(y, (a,), backward)


def cross_entropy(logits, targets, mask=None):
    """Mean token cross-entropy of ``logits[..., V]`` against integer ``targets``.

    Positions with ``mask == 0`` are ignored; the mean runs over the
    unmasked positions.
    """
    targets = np.asarray(targets, dtype=np.int64)
    flat = logits.data.reshape(-1, logits.shape[-1])
    t = targets.reshape(-1)
    m = np.ones(t.shape, dtype=DTYPE) if mask is None else np.asarray(mask, dtype=DTYPE).reshape(-1)
    denom = m.sum()
    if denom == 0:
        raise ValueError("cross_entropy over an empty mask")
    logp = log_softmax_array(flat, axis=-1)
    rows = np.arange(len(t))
    loss = -(logp[rows, t] * m).sum() / denom

    def backward(g):
        p = np.exp(logp)
        p[rows, t] -= 1.0
        p *= (m / denom)[:, None]
        return ((g * p).reshape(logits.shape),)

    return _make(np.asarray(loss), (logits,), backward)


BCE_EPS = 1e-12


def binary_cross_entropy(probs, labels, eps=BCE_EPS):
    """Mean of ``-(s log p + (1 - s) log(1 - p))`` with p clamped to [eps, 1 - eps]."""
    s = np.asarray(labels, dtype=DTYPE)
    raw = probs.data
    p = np.clip(raw, eps, 1.0 - eps)
    n = p.size
    loss = -(s * np.log(p) + (1.0 - s) * np.log(1.0 - p)).sum() / n

    def backward(g):
        inside = (raw >= eps) & (raw <= 1.0 - eps)
        d = (-(s / p) + (1.0 - s) / (1.0 - p)) / n
        return (g * d * inside,)

    return _make(np.asarray(loss), (probs,), backward)
