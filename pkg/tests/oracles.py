"""Independent reference implementations used only as test oracles.

Everything here is written from first principles (explicit loops, direct
formulas) and deliberately imports nothing from the package's kernel or
diff modules, so agreement between the two is meaningful evidence.
"""

from __future__ import annotations

import math

import numpy as np

F64 = np.float64
F32 = np.float32


def conv2d_ref(x, w, strides, pads, dilations, groups):
    n, cin, h, wd = x.shape
    co, cpg, kh, kw = w.shape
    sh, sw = strides
    dh, dw = dilations
    t, l, b, r = pads
    xp = np.zeros((n, cin, h + t + b, wd + l + r), F64)
    xp[:, :, t:t + h, l:l + wd] = x.astype(F64)
    eh, ew = (kh - 1) * dh + 1, (kw - 1) * dw + 1
    oh = (h + t + b - eh) // sh + 1
    ow = (wd + l + r - ew) // sw + 1
    out = np.zeros((n, co, oh, ow), F64)
    cog = co // groups
    wf = w.astype(F64)
    for ni in range(n):
        for oc in range(co):
            g = oc // cog
            for oi in range(oh):
                for oj in range(ow):
                    acc = 0.0
                    for ic in range(cpg):
                        c = g * cpg + ic
                        for u in range(kh):
                            for v in range(kw):
                                acc += (xp[ni, c, oi * sh + u * dh, oj * sw + v * dw]
                                        * wf[oc, ic, u, v])
                    out[ni, oc, oi, oj] = acc
    return out.astype(F32)


def depthwise_conv2d_ref(x, w, strides, pads, dilations):
    # depthwise = grouped conv with groups = input channels
    return conv2d_ref(x, w, strides, pads, dilations, groups=x.shape[1])


def dense_ref(x, w):
    n, cin = x.shape
    co = w.shape[0]
    out = np.zeros((n, co), F64)
    xf, wf = x.astype(F64), w.astype(F64)
    for ni in range(n):
        for oc in range(co):
            acc = 0.0
            for i in range(cin):
                acc += xf[ni, i] * wf[oc, i]
            out[ni, oc] = acc
    return out.astype(F32)


def bias_add_ref(x, b):
    shape = [1] * x.ndim
    shape[1] = b.shape[0]
    return (x.astype(F64) + b.astype(F64).reshape(shape)).astype(F32)


def relu_ref(x):
    return np.maximum(x, F32(0.0))


def relu6_ref(x):
    return np.minimum(np.maximum(x, F32(0.0)), F32(6.0))


def _pool_windows(h, wd, kernel, strides, pads):
    kh, kw = kernel
    sh, sw = strides
    t, l, b, r = pads
    oh = (h + t + b - kh) // sh + 1
    ow = (wd + l + r - kw) // sw + 1
    return oh, ow, kh, kw, sh, sw, t, l


def maxpool2d_ref(x, kernel, strides, pads):
    n, c, h, wd = x.shape
    oh, ow, kh, kw, sh, sw, t, l = _pool_windows(h, wd, kernel, strides, pads)
    out = np.full((n, c, oh, ow), -np.inf, F64)
    for ni in range(n):
        for ci in range(c):
            for oi in range(oh):
                for oj in range(ow):
                    best = -math.inf
                    for u in range(kh):
                        for v in range(kw):
                            ri, rj = oi * sh + u - t, oj * sw + v - l
                            if 0 <= ri < h and 0 <= rj < wd:
                                best = max(best, float(x[ni, ci, ri, rj]))
                    out[ni, ci, oi, oj] = best
    return out.astype(F32)


def avgpool2d_ref(x, kernel, strides, pads):
    # mean over cells inside the image only; padding never contributes
    n, c, h, wd = x.shape
    oh, ow, kh, kw, sh, sw, t, l = _pool_windows(h, wd, kernel, strides, pads)
    out = np.zeros((n, c, oh, ow), F64)
    for ni in range(n):
        for ci in range(c):
            for oi in range(oh):
                for oj in range(ow):
                    acc, count = 0.0, 0
                    for u in range(kh):
                        for v in range(kw):
                            ri, rj = oi * sh + u - t, oj * sw + v - l
                            if 0 <= ri < h and 0 <= rj < wd:
                                acc += float(x[ni, ci, ri, rj])
                                count += 1
                    out[ni, ci, oi, oj] = acc / count
    return out.astype(F32)


def global_avgpool2d_ref(x):
    n, c, h, wd = x.shape
    out = np.zeros((n, c), F64)
    for ni in range(n):
        for ci in range(c):
            acc = 0.0
            for i in range(h):
                for j in range(wd):
                    acc += float(x[ni, ci, i, j])
            out[ni, ci] = acc / (h * wd)
    return out.astype(F32)


def batchnorm_ref(x, scale, shift, mean, var, epsilon):
    shape = [1] * x.ndim
    shape[1] = scale.shape[0]
    xf = x.astype(F64)
    s = scale.astype(F64).reshape(shape)
    b = shift.astype(F64).reshape(shape)
    m = mean.astype(F64).reshape(shape)
    v = var.astype(F64).reshape(shape)
    return (s * (xf - m) / np.sqrt(v + epsilon) + b).astype(F32)


def softmax_ref(x):
    xf = x.astype(F64)
    shifted = xf - xf.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=-1, keepdims=True)).astype(F32)


def flatten_ref(x):
    return x.reshape(x.shape[0], -1)


def pad_ref(x, pads):
    widths = [(pads[2 * i], pads[2 * i + 1]) for i in range(x.ndim)]
    return np.pad(x, widths, mode="constant", constant_values=0.0)


def add_ref(a, b):
    return (a.astype(F64) + b.astype(F64)).astype(F32)


def topk_ref(logits, k):
    """Full-sort oracle: score descending, index ascending on ties."""
    row = [(-float(s) if not math.isnan(s) else math.inf, i)
           for i, s in enumerate(logits)]
    row.sort()
    return [(i, float(logits[i])) for _, i in row[:k]]


# ---------------------------------------------------------------------------
# Straight-line model executors (independent of the interpreter)
# ---------------------------------------------------------------------------

_CONV = dict(strides=(1, 1), pads=(1, 1, 1, 1), dilations=(1, 1), groups=1)
_CONV_S2 = dict(_CONV, strides=(2, 2))


def smallcnn_forward_ref(params, x):
    y = conv2d_ref(x, params["w1"], **_CONV)
    y = bias_add_ref(y, params["b1"])
    y = relu_ref(y)
    y = maxpool2d_ref(y, (2, 2), (2, 2), (0, 0, 0, 0))
    y = conv2d_ref(y, params["w2"], **_CONV)
    y = bias_add_ref(y, params["b2"])
    y = relu_ref(y)
    y = conv2d_ref(y, params["w3"], **_CONV_S2)
    y = bias_add_ref(y, params["b3"])
    y = relu_ref(y)
    y = flatten_ref(y)
    y = dense_ref(y, params["wd"])
    return bias_add_ref(y, params["bd"])


def gap_cnn_forward_ref(params, x):
    y = conv2d_ref(x, params["w1"], **_CONV)
    y = bias_add_ref(y, params["b1"])
    y = relu_ref(y)
    y = conv2d_ref(y, params["w2"], **_CONV)
    y = bias_add_ref(y, params["b2"])
    y = relu_ref(y)
    y = conv2d_ref(y, params["w3"], **_CONV_S2)
    y = bias_add_ref(y, params["b3"])
    y = relu_ref(y)
    y = global_avgpool2d_ref(y)
    y = dense_ref(y, params["wd"])
    return bias_add_ref(y, params["bd"])


# ---------------------------------------------------------------------------
# Exhaustive rank-correlation oracle
# ---------------------------------------------------------------------------


def tau_ref(a, b):
    """Tau-b by exhaustive O(|U|^2) pair enumeration over the label union,
    absent labels ranked k+1. Raises ZeroDivisionError when degenerate."""
    k = len(a)
    labels = sorted(set(a) | set(b))
    ra = [list(a).index(x) + 1 if x in a else k + 1 for x in labels]
    rb = [list(b).index(x) + 1 if x in b else k + 1 for x in labels]
    n = len(labels)
    concordant = discordant = ties_a = ties_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            da = ra[i] - ra[j]
            db = rb[i] - rb[j]
            if da * db > 0:
                concordant += 1
            elif da * db < 0:
                discordant += 1
            if da == 0:
                ties_a += 1
            if db == 0:
                ties_b += 1
    n_pairs = n * (n - 1) // 2
    denom = math.sqrt((n_pairs - ties_a) * (n_pairs - ties_b))
    if denom == 0.0:
        raise ZeroDivisionError("all ranks tied")
    return (concordant - discordant) / denom
