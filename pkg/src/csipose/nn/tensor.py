"""Reverse-mode autodiff over dense float64 arrays.

A :class:`Tensor` wraps a numpy array plus the bookkeeping needed to run
one backward pass: its graph parents and a closure that routes an
upstream gradient to them. The op set is deliberately small -- exactly
what a residual convolutional regressor and its composite loss need.

Conventions:

* everything is float64,
* ``backward()`` runs once per forward graph; a second call raises,
* gradients accumulate into ``.grad`` buffers (callers zero them).
"""

from __future__ import annotations

import numpy as np

from csipose.errors import ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_spent")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward_fn = backward_fn
        self._spent = False

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def backward(self):
        """Accumulate d(self)/d(leaf) into every leaf's ``.grad``.

        ``self`` must be a scalar. The graph is consumed: a second call
        without a fresh forward pass raises ``RuntimeError``.
        """
        if self._spent:
            raise RuntimeError(
                "backward() already ran on this graph; run a new forward pass first"
            )
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.data.shape}")

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        self._spent = True
        for node in reversed(topo):
            fn = node._backward_fn
            if fn is None:
                continue
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            fn(node.grad)
            # Release the subgraph so activations free early and reuse is caught.
            node._backward_fn = None
            node._parents = ()
            node._spent = True

    # Operator sugar for the handful of combinations the model uses.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _require_same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


def constant(data) -> Tensor:
    return Tensor(data)


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")

    def bwd(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return Tensor(a.data + b.data, parents=(a, b), backward_fn=bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")

    def bwd(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return Tensor(a.data - b.data, parents=(a, b), backward_fn=bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")

    def bwd(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return Tensor(a.data * b.data, parents=(a, b), backward_fn=bwd)


def scale(a: Tensor, s: float) -> Tensor:
    def bwd(g):
        _accumulate(a, g * s)

    return Tensor(a.data * s, parents=(a,), backward_fn=bwd)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        _accumulate(a, g * mask)

    return Tensor(np.where(mask, a.data, 0.0), parents=(a,), backward_fn=bwd)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape

    def bwd(g):
        _accumulate(a, g.reshape(old))

    return Tensor(a.data.reshape(shape), parents=(a,), backward_fn=bwd)


def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(a, np.full_like(a.data, g.reshape(-1)[0]))

    return Tensor(a.data.sum(), parents=(a,), backward_fn=bwd)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def bwd(g):
        _accumulate(a, np.full_like(a.data, g.reshape(-1)[0] / n))

    return Tensor(a.data.mean(), parents=(a,), backward_fn=bwd)


def mean_last(a: Tensor) -> Tensor:
    """Mean over the last axis."""
    n = a.data.shape[-1]

    def bwd(g):
        _accumulate(a, np.repeat(g[..., None] / n, n, axis=-1))

    return Tensor(a.data.mean(axis=-1), parents=(a,), backward_fn=bwd)


def l2_norm_last(a: Tensor) -> Tensor:
    """Euclidean norm over the last axis; subgradient 0 at the origin."""
    norm = np.sqrt((a.data * a.data).sum(axis=-1))

    def bwd(g):
        safe = np.where(norm > 0, norm, 1.0)
        _accumulate(a, (g / safe * (norm > 0))[..., None] * a.data)

    return Tensor(norm, parents=(a,), backward_fn=bwd)


def huber_map(a: Tensor, delta: float, variant: str = "paper") -> Tensor:
    """Elementwise piecewise quadratic/linear robust penalty.

    ``paper`` uses 0.5*x**2 for |x| < delta and |x| - 0.5 otherwise (a
    documented jump of 0.5*delta**2 - delta + 0.5 at |x| = delta);
    ``standard`` is the continuous form delta*(|x| - 0.5*delta).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    x = a.data
    absx = np.abs(x)
    if variant == "paper":
        quad = absx < delta
        out = np.where(quad, 0.5 * x * x, absx - 0.5)
        slope = np.where(quad, x, np.sign(x))
    elif variant == "standard":
        quad = absx <= delta
        out = np.where(quad, 0.5 * x * x, delta * (absx - 0.5 * delta))
        slope = np.where(quad, x, delta * np.sign(x))
    else:
        raise ValueError(f"huber variant must be 'paper' or 'standard', got {variant!r}")

    def bwd(g):
        _accumulate(a, g * slope)

    return Tensor(out, parents=(a,), backward_fn=bwd)
