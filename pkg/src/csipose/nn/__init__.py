"""Minimal dense-array compute layer with reverse-mode differentiation."""

from csipose.nn.tensor import (
    Tensor,
    add,
    constant,
    huber_map,
    l2_norm_last,
    mean_all,
    mean_last,
    mul,
    relu,
    reshape,
    scale,
    sub,
    sum_all,
)
from csipose.nn.layers import batch_norm, conv2d, linear
from csipose.nn.params import ParamStore, load_checkpoint, save_checkpoint
from csipose.nn.optim import AdamState, adam_step
from csipose.nn.kernels import backend_name

__all__ = [
    "Tensor",
    "add",
    "constant",
    "huber_map",
    "l2_norm_last",
    "mean_all",
    "mean_last",
    "mul",
    "relu",
    "reshape",
    "scale",
    "sub",
    "sum_all",
    "batch_norm",
    "conv2d",
    "linear",
    "ParamStore",
    "load_checkpoint",
    "save_checkpoint",
    "AdamState",
    "adam_step",
    "backend_name",
]
