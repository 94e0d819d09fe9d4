"""Central finite-difference gradient checking."""
from __future__ import annotations

import numpy as np

from .optim import zero_grads

# below this magnitude both gradients count as zero
ABS_FLOOR = 1e-6


def numerical_grad(loss_fn, param, eps=1e-5):
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        f_plus = float(loss_fn().data)
        flat[i] = old - eps
        f_minus = float(loss_fn().data)
        flat[i] = old
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def relative_error(analytic, numeric, floor=ABS_FLOOR):
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)


def grad_check(loss_fn, params, eps=1e-5, names=None):
    """Compare backprop gradients with central differences.

    ``loss_fn`` must rebuild the scalar loss from the current values of
    ``params``. Returns ``(max_error, per_param_errors)``.
    """
    zero_grads(params)
    loss = loss_fn()
    loss.backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}
    zero_grads(params)
    errors = {}
    for name in names or sorted(params):
        num = numerical_grad(loss_fn, params[name], eps)
        err = relative_error(analytic[name], num)
        errors[name] = float(err.max()) if err.size else 0.0
    return max(errors.values(), default=0.0), errors
