"""2-D convolution kernels with a compiled core and a numpy fallback.

Two interchangeable backends implement the same valid-convolution
primitives on pre-padded NHWC arrays:

* ``compiled`` -- Cython extension (:mod:`csipose.nn._convkernels`),
  direct loops over the receptive field.
* ``numpy`` -- one BLAS matmul per kernel tap.

The backend is chosen once at import time: the compiled extension when
it is importable, numpy otherwise. Set ``CSIPOSE_KERNEL=numpy`` (or
``compiled``) to force a backend. Both produce identical results up to
floating-point summation order; each one is bit-deterministic.

Padding semantics live here, in :func:`conv2d_forward` and friends:
``same`` keeps ``ceil(size / stride)`` spatial output (asymmetric
padding, extra row/column at the bottom/right), ``valid`` applies no
padding.
"""

from __future__ import annotations

import os

import numpy as np

from csipose.errors import ShapeError

try:
    from csipose.nn import _convkernels as _ext
except ImportError:  # pragma: no cover - depends on build environment
    _ext = None


# --------------------------------------------------------------------------
# numpy backend: one matmul per kernel tap, fixed accumulation order
# --------------------------------------------------------------------------

def _np_conv_forward(xp, k, sh, sw):
    n, hp, wp, ci = xp.shape
    kh, kw, _, co = k.shape
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    out = np.zeros((n, ho, wo, co), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, i : i + sh * ho : sh, j : j + sw * wo : sw, :]
            out += xs @ k[i, j]
    return out


def _np_conv_backward_input(g, k, sh, sw, hp, wp):
    n, ho, wo, co = g.shape
    kh, kw, ci, _ = k.shape
    gxp = np.zeros((n, hp, wp, ci), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            gxp[:, i : i + sh * ho : sh, j : j + sw * wo : sw, :] += g @ k[i, j].T
    return gxp


def _np_conv_backward_kernel(xp, g, sh, sw, kh, kw):
    n, hp, wp, ci = xp.shape
    _, ho, wo, co = g.shape
    gk = np.empty((kh, kw, ci, co), dtype=np.float64)
    gflat = g.reshape(-1, co)
    for i in range(kh):
        for j in range(kw):
            xs = xp[:, i : i + sh * ho : sh, j : j + sw * wo : sw, :]
            gk[i, j] = xs.reshape(-1, ci).T @ gflat
    return gk


_BACKENDS = {
    "numpy": (_np_conv_forward, _np_conv_backward_input, _np_conv_backward_kernel),
}
if _ext is not None:
    _BACKENDS["compiled"] = (
        _ext.conv_forward,
        _ext.conv_backward_input,
        _ext.conv_backward_kernel,
    )


def _select_backend() -> str:
    forced = os.environ.get("CSIPOSE_KERNEL", "").strip().lower()
    if forced:
        if forced not in ("numpy", "compiled"):
            raise ValueError(f"CSIPOSE_KERNEL must be 'numpy' or 'compiled', got {forced!r}")
        if forced == "compiled" and _ext is None:
            raise ImportError("CSIPOSE_KERNEL=compiled but the extension is not built")
        return forced
    return "compiled" if _ext is not None else "numpy"


_ACTIVE = _select_backend()
_conv_forward, _conv_backward_input, _conv_backward_kernel = _BACKENDS[_ACTIVE]


def backend_name() -> str:
    """Name of the active kernel backend ('compiled' or 'numpy')."""
    return _ACTIVE


def get_backend(name: str):
    """Explicit backend lookup, for benchmarks and parity tests."""
    if name not in _BACKENDS:
        raise KeyError(f"backend {name!r} not available (have {sorted(_BACKENDS)})")
    return _BACKENDS[name]


# --------------------------------------------------------------------------
# padding algebra
# --------------------------------------------------------------------------

def conv_output_size(size: int, ksize: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-size // stride)  # ceil division
    if padding == "valid":
        return (size - ksize) // stride + 1
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")


def _pad_amounts(size, ksize, stride, padding):
    if padding == "valid":
        return 0, 0
    out = conv_output_size(size, ksize, stride, padding)
    total = max(0, (out - 1) * stride + ksize - size)
    return total // 2, total - total // 2


def _check_conv_args(x, k, stride):
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be NHWC, got shape {x.shape}")
    kh, kw, ci, co = k.shape
    if kh not in (1, 3) or kw not in (1, 3):
        raise ValueError(f"kernel spatial dims must be 1 or 3, got {kh}x{kw}")
    sh, sw = stride
    if sh not in (1, 2) or sw not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    if x.shape[3] != ci:
        raise ShapeError(
            f"input has {x.shape[3]} channels but kernel expects {ci}"
        )


def conv2d_forward(x, k, stride=(1, 1), padding="same"):
    """Convolve a batch NHWC array with a (kh, kw, Cin, Cout) kernel."""
    _check_conv_args(x, k, stride)
    kh, kw = k.shape[:2]
    sh, sw = stride
    pt, pb = _pad_amounts(x.shape[1], kh, sh, padding)
    pl, pr = _pad_amounts(x.shape[2], kw, sw, padding)
    xp = x
    if pt or pb or pl or pr:
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    xp = np.ascontiguousarray(xp, dtype=np.float64)
    return _conv_forward(xp, np.ascontiguousarray(k, dtype=np.float64), sh, sw)


def conv2d_backward(x, k, g, stride=(1, 1), padding="same"):
    """Gradients of ``conv2d_forward`` w.r.t. its input and kernel.

    Returns ``(gx, gk)`` given upstream gradient ``g`` on the output.
    """
    _check_conv_args(x, k, stride)
    kh, kw = k.shape[:2]
    sh, sw = stride
    pt, pb = _pad_amounts(x.shape[1], kh, sh, padding)
    pl, pr = _pad_amounts(x.shape[2], kw, sw, padding)
    xp = x
    if pt or pb or pl or pr:
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    xp = np.ascontiguousarray(xp, dtype=np.float64)
    k = np.ascontiguousarray(k, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    hp, wp = xp.shape[1], xp.shape[2]
    gxp = _conv_backward_input(g, k, sh, sw, hp, wp)
    gk = _conv_backward_kernel(xp, g, sh, sw, kh, kw)
    gx = gxp[:, pt : hp - pb, pl : wp - pr, :]
    return np.ascontiguousarray(gx), gk
