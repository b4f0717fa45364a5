from .checkpoint import load_tensors, save_tensors
from .gradcheck import gradient_check
from .nn import (
    Linear,
    ParamStore,
    attention_weights,
    batch_norm,
    dense,
    dropout,
    glorot_uniform,
    l2_penalty,
    layer_norm,
    scaled_dot_attention,
)
from .optim import LEARNING_RATE_GRID, OptimizerState, apply_step, optimizer_step
from .tensor import Tensor, concat, no_grad

__all__ = [
    "LEARNING_RATE_GRID",
    "Linear",
    "OptimizerState",
    "ParamStore",
    "Tensor",
    "apply_step",
    "attention_weights",
    "batch_norm",
    "concat",
    "dense",
    "dropout",
    "glorot_uniform",
    "gradient_check",
    "l2_penalty",
    "layer_norm",
    "load_tensors",
    "no_grad",
    "optimizer_step",
    "save_tensors",
    "scaled_dot_attention",
]
