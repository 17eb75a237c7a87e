"""Minimal reverse-mode autodiff plus the MLP/GRU/Adam building blocks."""

from .tensor import (
    GraphError,
    ShapeError,
    Tensor,
    backward,
    concat,
    exp,
    grad_enabled,
    gradients,
    log,
    log_softmax,
    no_grad,
    sigmoid,
    softplus,
    square,
    tanh,
    tmean,
    tsum,
)
from .nn import (
    GruParams,
    MlpParams,
    forward_mlp,
    grad_check,
    grad_check_detail,
    gru_cell,
    run_gru_forward,
    run_gru_reverse,
)
from .optim import AdamState, TrainingError, adam_step
from .checkpoint import load_arrays, load_params, save_arrays, save_params

__all__ = [
    "Tensor", "ShapeError", "GraphError", "backward", "gradients", "no_grad",
    "grad_enabled", "concat", "exp", "log", "tanh", "sigmoid", "softplus",
    "square", "tsum", "tmean", "log_softmax",
    "MlpParams", "GruParams", "forward_mlp", "gru_cell",
    "run_gru_forward", "run_gru_reverse", "grad_check", "grad_check_detail",
    "AdamState", "adam_step", "TrainingError",
    "save_arrays", "load_arrays", "save_params", "load_params",
]
