from .checkpoint import CheckpointError, load_arrays, save_arrays
from .gradcheck import grad_check, numerical_grad, relative_error
from .layers import (
    ParamSpec, additive_attention, additive_attention_specs, affine, affine_specs,
    attention_pool, blstm, blstm_specs, glorot_range, init_params, lstm, lstm_specs, lstm_step,
    masked_mean,
)
from .optim import SGD, Adam, clip_grad_norm, make_optimizer, sgd_update, zero_grads
from .rng import make_rng, spawn_rngs
from .tensor import (
    Tensor, binary_cross_entropy, concat, cross_entropy, embedding, no_grad, set_debug,
    sigmoid, softmax, softmax_array, stack, tanh,
)

__all__ = [
    "Tensor", "no_grad", "set_debug", "sigmoid", "softmax", "softmax_array", "tanh", "concat",
    "stack", "embedding", "cross_entropy", "binary_cross_entropy", "ParamSpec", "init_params",
    "glorot_range", "lstm_step", "lstm", "blstm", "lstm_specs", "blstm_specs", "affine",
    "affine_specs", "attention_pool", "additive_attention", "additive_attention_specs",
    "masked_mean", "SGD", "Adam", "clip_grad_norm", "sgd_update", "make_optimizer", "zero_grads",
    "grad_check", "numerical_grad", "relative_error", "save_arrays", "load_arrays",
    "CheckpointError", "make_rng", "spawn_rngs",
]
