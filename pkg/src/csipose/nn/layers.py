"""Differentiable layer ops: 2-D convolution, batch norm, affine."""

from __future__ import annotations

import numpy as np

from csipose.errors import ShapeError
from csipose.nn import kernels
from csipose.nn.tensor import Tensor, _accumulate


def conv2d(x: Tensor, kernel: Tensor, stride=(1, 1), padding="same") -> Tensor:
    """NHWC convolution; kernel is (kh, kw, Cin, Cout), no bias."""
    out = kernels.conv2d_forward(x.data, kernel.data, stride, padding)

    def bwd(g):
        gx, gk = kernels.conv2d_backward(x.data, kernel.data, g, stride, padding)
        _accumulate(x, gx)
        _accumulate(kernel, gk)

    return Tensor(out, parents=(x, kernel), backward_fn=bwd)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map on rows: (N, Din) @ (Din, Dout) + (Dout,)."""
    if x.data.ndim != 2 or x.data.shape[1] != weight.data.shape[0]:
        raise ShapeError(
            f"linear: input {x.data.shape} incompatible with weight {weight.data.shape}"
        )
    if bias.data.shape != (weight.data.shape[1],):
        raise ShapeError(
            f"linear: bias {bias.data.shape} incompatible with weight {weight.data.shape}"
        )
    out = x.data @ weight.data + bias.data

    def bwd(g):
        _accumulate(x, g @ weight.data.T)
        _accumulate(weight, x.data.T @ g)
        _accumulate(bias, g.sum(axis=0))

    return Tensor(out, parents=(x, weight, bias), backward_fn=bwd)


def batch_norm(
    x: Tensor,
    scale: Tensor,
    shift: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of an NHWC tensor.

    Training mode normalizes with batch statistics over (N, H, W) and
    blends them into the running buffers: ``running += momentum * (batch
    - running)``, so momentum is the weight of the new batch (momentum
    1.0 makes eval on the same batch reproduce the train output). Eval
    mode normalizes with the running buffers; variances are biased.
    Running buffers are mutated in place and stay outside the graph.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"batch_norm expects NHWC input, got shape {x.data.shape}")
    c = x.data.shape[3]
    if scale.data.shape != (c,) or shift.data.shape != (c,):
        raise ShapeError(
            f"batch_norm: scale/shift must have shape ({c},), got "
            f"{scale.data.shape} and {shift.data.shape}"
        )

    if training:
        mu = x.data.mean(axis=(0, 1, 2))
        var = x.data.var(axis=(0, 1, 2))
        istd = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mu) * istd
        running_mean.data += momentum * (mu - running_mean.data)
        running_var.data += momentum * (var - running_var.data)
        m = x.data.shape[0] * x.data.shape[1] * x.data.shape[2]

        def bwd(g):
            dxhat = g * scale.data
            sum_dxhat = dxhat.sum(axis=(0, 1, 2))
            sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 1, 2))
            dx = (istd / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
            _accumulate(x, dx)
            _accumulate(scale, (g * xhat).sum(axis=(0, 1, 2)))
            _accumulate(shift, g.sum(axis=(0, 1, 2)))

    else:
        istd = 1.0 / np.sqrt(running_var.data + eps)
        xhat = (x.data - running_mean.data) * istd

        def bwd(g):
            _accumulate(x, g * (scale.data * istd))
            _accumulate(scale, (g * xhat).sum(axis=(0, 1, 2)))
            _accumulate(shift, g.sum(axis=(0, 1, 2)))

    out = scale.data * xhat + shift.data
    return Tensor(out, parents=(x, scale, shift), backward_fn=bwd)
