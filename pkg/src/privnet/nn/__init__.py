"""Numerical kernel: tensors, reverse-mode gradients, Adam, clipping, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .init import glorot_uniform
from .optim import AdamState, adam_step, clip_global_norm, global_norm
from .tensor import (
    GradTape,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    div,
    embedding,
    exp,
    log,
    log_sigmoid,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    reshape,
    sigmoid,
    softmax,
    sub,
    sum_,
    take,
)

__all__ = [
    "AdamState", "GradTape", "Tensor", "add", "adam_step", "as_tensor", "backward",
    "clip_global_norm", "concat", "div", "embedding", "exp", "global_norm",
    "glorot_uniform", "load_checkpoint", "log", "log_sigmoid", "log_softmax", "matmul",
    "mean", "mul", "neg", "reshape", "save_checkpoint", "sigmoid", "softmax", "sub",
    "sum_", "take",
]
