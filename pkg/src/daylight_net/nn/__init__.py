"""Minimal tensor math and reverse-mode differentiation."""

from .adam import Adam, AdamState, adam_step, init_adam
from .kernels import BACKEND, HAS_NUMBA
from .ops import (
    concat,
    conv2d,
    dense,
    dropout,
    global_avg_pool,
    maxpool2d,
    mse_loss,
    mul,
    relu,
    sum_all,
)
from .tensor import GradTape, Tensor, backward, grad_enabled, no_grad

__all__ = [
    "Adam",
    "AdamState",
    "BACKEND",
    "GradTape",
    "HAS_NUMBA",
    "Tensor",
    "adam_step",
    "backward",
    "concat",
    "conv2d",
    "dense",
    "dropout",
    "global_avg_pool",
    "grad_enabled",
    "init_adam",
    "maxpool2d",
    "mse_loss",
    "mul",
    "no_grad",
    "relu",
    "sum_all",
]
