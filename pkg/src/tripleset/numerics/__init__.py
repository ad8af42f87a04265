from .tensor import (
    Tape, Tensor, add, as_tensor, backward, clamp_min, concat, current_tape, div, dropout,
    embedding, exp, gelu, index, layer_norm, log, matmul, mean, mul, neg, reshape, softmax,
    stack, sub, sum, swapaxes, tanh, transpose,
)
from .optim import OptimizerState, ParamGroup, adamw_step, clip_grad_norm, global_grad_norm, zero_grad
from .checkpoint import CheckpointError, load_params, save_params

__all__ = [
    "Tape", "Tensor", "add", "as_tensor", "backward", "clamp_min", "concat", "current_tape",
    "div", "dropout", "embedding", "exp", "gelu", "index", "layer_norm", "log", "matmul",
    "mean", "mul", "neg", "reshape", "softmax", "stack", "sub", "sum", "swapaxes", "tanh",
    "transpose", "OptimizerState", "ParamGroup", "adamw_step", "clip_grad_norm",
    "global_grad_norm", "zero_grad", "CheckpointError", "load_params", "save_params",
]
