"""Composite training loss: joint-wise L2 distance plus a robust term."""

from __future__ import annotations

import numpy as np

from csipose import nn
from csipose.errors import ShapeError
from csipose.skeleton import NUM_JOINTS


def _as_pose_tensor(x) -> nn.Tensor:
    t = x if isinstance(x, nn.Tensor) else nn.Tensor(np.asarray(x, dtype=np.float64))
    if t.data.ndim != 3 or t.data.shape[1:] != (NUM_JOINTS, 3):
        raise ShapeError(f"pose batch must be (T, {NUM_JOINTS}, 3), got {t.data.shape}")
    return t


def position_loss(pred, truth) -> nn.Tensor:
    """Mean over samples and joints of the per-joint Euclidean distance."""
    p = _as_pose_tensor(pred)
    q = _as_pose_tensor(truth)
    if p.data.shape != q.data.shape:
        raise ShapeError(f"batch shapes differ: {p.data.shape} vs {q.data.shape}")
    return nn.mean_all(nn.l2_norm_last(nn.sub(p, q)))


def huber_scalar(x: float, delta: float, variant: str = "paper") -> float:
    """Pointwise robust penalty.

    ``paper``: 0.5*x**2 when |x| < delta, |x| - 0.5 otherwise (has a
    step of 0.5*delta**2 - delta + 0.5 at |x| = delta). ``standard``:
    the continuous form, delta*(|x| - 0.5*delta) outside the quadratic
    region.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    ax = abs(x)
    if variant == "paper":
        return 0.5 * x * x if ax < delta else ax - 0.5
    if variant == "standard":
        return 0.5 * x * x if ax <= delta else delta * (ax - 0.5 * delta)
    raise ValueError(f"huber variant must be 'paper' or 'standard', got {variant!r}")


def huber_norm(x, delta: float, variant: str = "paper") -> float:
    """Mean of the pointwise penalty over a vector."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("huber_norm needs a non-empty vector")
    return float(np.mean([huber_scalar(v, delta, variant) for v in x]))


def huber_loss(pred, truth, delta: float = 0.75, variant: str = "paper") -> nn.Tensor:
    """Mean over samples and joints of the per-joint robust norm.

    The norm of one joint is the mean penalty over its 3 coordinate
    residuals.
    """
    p = _as_pose_tensor(pred)
    q = _as_pose_tensor(truth)
    if p.data.shape != q.data.shape:
        raise ShapeError(f"batch shapes differ: {p.data.shape} vs {q.data.shape}")
    return nn.mean_all(nn.mean_last(nn.huber_map(nn.sub(p, q), delta, variant)))


def total_loss(pred, truth, delta: float = 0.75, variant: str = "paper") -> nn.Tensor:
    """Unweighted sum of the position and robust terms."""
    return nn.add(position_loss(pred, truth), huber_loss(pred, truth, delta, variant))
