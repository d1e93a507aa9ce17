"""Reference numeric kernels, NCHW, deterministic by construction.

Every reduction accumulates in binary64 and rounds to binary32 exactly
once, via np.einsum with optimize=False (single fixed-order C loop, no
BLAS dispatch), so results are bit-identical across runs, machines with
different BLAS builds, and thread counts. These are oracles, not fast
kernels.

Shape agreement between operands is the interpreter's job (static
inference runs first); kernels only assume it.
"""

from __future__ import annotations

import math

import numpy as np

F32 = np.float32
F64 = np.float64


def _windows(x64: np.ndarray, kh: int, kw: int, sh: int, sw: int,
             dh: int = 1, dw: int = 1) -> np.ndarray:
    """[n,c,H,W] -> [n,c,oh,ow,kh,kw] view of strided dilated windows."""
    eh = (kh - 1) * dh + 1
    ew = (kw - 1) * dw + 1
    win = np.lib.stride_tricks.sliding_window_view(x64, (eh, ew), axis=(2, 3))
    return win[:, :, ::sh, ::sw, ::dh, ::dw]


def _pad_nchw(x64: np.ndarray, pads, value: float = 0.0) -> np.ndarray:
    top, left, bottom, right = pads
    if not any(pads):
        return x64
    return np.pad(x64, ((0, 0), (0, 0), (top, bottom), (left, right)),
                  constant_values=value)


def conv2d(x: np.ndarray, w: np.ndarray, strides, pads, dilations, groups: int) -> np.ndarray:
    """x [n,ic,h,w]; w [oc, ic/groups, kh, kw]; pads [top,left,bottom,right]."""
    n = x.shape[0]
    oc, cpg, kh, kw = w.shape
    sh, sw = strides
    dh, dw = dilations
    xp = _pad_nchw(x.astype(F64), pads)
    win = _windows(xp, kh, kw, sh, sw, dh, dw)
    oh, ow = win.shape[2], win.shape[3]
    wing = win.reshape(n, groups, cpg, oh, ow, kh, kw)
    wg = w.astype(F64).reshape(groups, oc // groups, cpg, kh, kw)
    out = np.einsum("ngihwuv,goiuv->ngohw", wing, wg, optimize=False)
    return out.reshape(n, oc, oh, ow).astype(F32)


def depthwise_conv2d(x: np.ndarray, w: np.ndarray, strides, pads, dilations) -> np.ndarray:
    """w in canonical grouped form [c*multiplier, 1, kh, kw]; groups = c."""
    return conv2d(x, w, strides, pads, dilations, groups=x.shape[1])


def dense(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """x [n,in]; w [out,in]."""
    out = np.einsum("ni,oi->no", x.astype(F64), w.astype(F64), optimize=False)
    return out.astype(F32)


def bias_add(x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """b broadcast over the channel axis: axis 1 for rank 2 and rank 4."""
    shape = [1] * x.ndim
    shape[1] = b.shape[0]
    out = x.astype(F64) + b.astype(F64).reshape(shape)
    return out.astype(F32)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, F32(0.0))


def relu6(x: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(x, F32(0.0)), F32(6.0))


def maxpool2d(x: np.ndarray, kernel, strides, pads) -> np.ndarray:
    # padding cells hold -inf so they never win the max
    kh, kw = kernel
    xp = _pad_nchw(x.astype(F64), pads, value=-math.inf)
    win = _windows(xp, kh, kw, *strides)
    return win.max(axis=(4, 5)).astype(F32)


def avgpool2d(x: np.ndarray, kernel, strides, pads) -> np.ndarray:
    """Average over valid (non-padding) cells only, so padding with
    all-equal inputs is mean-preserving."""
    kh, kw = kernel
    sh, sw = strides
    xp = _pad_nchw(x.astype(F64), pads)
    win = _windows(xp, kh, kw, sh, sw)
    total = np.einsum("nchwuv->nchw", win, optimize=False)
    ones = np.ones((1, 1) + x.shape[2:], dtype=F64)
    counts = _windows(_pad_nchw(ones, pads), kh, kw, sh, sw).sum(axis=(4, 5))
    return (total / counts).astype(F32)


def global_avgpool2d(x: np.ndarray) -> np.ndarray:
    """[n,c,h,w] -> [n,c]."""
    n, c, h, w = x.shape
    total = np.einsum("nchw->nc", x.astype(F64), optimize=False)
    return (total / (h * w)).astype(F32)


def batchnorm(x: np.ndarray, gamma, beta, mean, var, epsilon: float) -> np.ndarray:
    """Inference-mode affine form over the channel axis (axis 1)."""
    shape = [1] * x.ndim
    shape[1] = gamma.shape[0]
    g = gamma.astype(F64).reshape(shape)
    b = beta.astype(F64).reshape(shape)
    m = mean.astype(F64).reshape(shape)
    v = var.astype(F64).reshape(shape)
    out = g * (x.astype(F64) - m) / np.sqrt(v + epsilon) + b
    return out.astype(F32)


def softmax(x: np.ndarray) -> np.ndarray:
    """Normalizes over the last axis; max-shifted for stability."""
    x64 = x.astype(F64)
    shifted = x64 - x64.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=-1, keepdims=True)).astype(F32)


def flatten(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x).reshape(x.shape[0], -1)


def reshape(x: np.ndarray, shape) -> np.ndarray:
    return np.ascontiguousarray(x).reshape(tuple(shape))


def pad(x: np.ndarray, pads) -> np.ndarray:
    """pads interleaved per axis: [before_0, after_0, before_1, after_1, ...]."""
    widths = [(pads[2 * i], pads[2 * i + 1]) for i in range(x.ndim)]
    return np.pad(x, widths, constant_values=F32(0.0))


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a.astype(F64) + b.astype(F64)).astype(F32)


def concat(arrays, axis: int) -> np.ndarray:
    return np.concatenate(list(arrays), axis=axis)
