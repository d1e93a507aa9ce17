"""The closed operator set: attribute schemas and static shape inference.

Every graph node must use one of the ops below with exactly the attribute
keys its schema lists. Shape inference is a pure function of input shapes
plus attributes, so a structurally valid graph can be shape-checked without
running it. Spatial attributes are layout-independent: ``strides`` and
``dilations`` are ``[h, w]``, conv/pool ``pads`` are
``[top, left, bottom, right]``. Only per-axis attributes (``Pad.pads``,
``Concat.axis``, ``Reshape.shape``) follow the graph's activation layout.

Weight conventions:
  * Conv2D           NCHW: ``[out_c, in_c/groups, kh, kw]``; NHWC: ``[kh, kw, in_c/groups, out_c]``
  * DepthwiseConv2D  NCHW: ``[c*mult, 1, kh, kw]``;          NHWC: ``[kh, kw, c, mult]``
  * Dense            ``[out_features, in_features]`` in both layouts
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

NCHW = "NCHW"
NHWC = "NHWC"
LAYOUTS = (NCHW, NHWC)


class ShapeProblem(ValueError):
    """Internal: a shape rule failed. Callers wrap it with node context."""


@dataclass(frozen=True)
class OpSchema:
    attrs: dict[str, str]  # attr name -> kind in {"int", "float", "int_list"}
    min_inputs: int
    max_inputs: int  # -1 for unbounded
    param_slots: dict[int, str]  # input index -> tensor role
    infer: Callable[[list[tuple[int, ...]], dict, str], tuple[int, ...]]


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeProblem(msg)


def _spatial_axes(layout: str) -> tuple[int, int]:
    return (2, 3) if layout == NCHW else (1, 2)


def _channel_axis(layout: str) -> int:
    return 1 if layout == NCHW else 3


def _window_extent(size: int, pad_before: int, pad_after: int, kernel: int,
                   stride: int, dilation: int = 1) -> int:
    eff = dilation * (kernel - 1) + 1
    span = size + pad_before + pad_after - eff
    _require(span >= 0, f"window {kernel} (dilation {dilation}) exceeds padded extent {size + pad_before + pad_after}")
    _require(stride >= 1, "stride must be >= 1")
    return span // stride + 1


def _conv_like_window(x: tuple[int, ...], kh: int, kw: int, attrs: dict,
                      layout: str, dilations: bool) -> tuple[int, int]:
    ah, aw = _spatial_axes(layout)
    sh, sw = attrs["strides"]
    pt, pl, pb, pr = attrs["pads"]
    dh, dw = attrs["dilations"] if dilations else (1, 1)
    oh = _window_extent(x[ah], pt, pb, kh, sh, dh)
    ow = _window_extent(x[aw], pl, pr, kw, sw, dw)
    return oh, ow


def _infer_conv2d(shapes, attrs, layout):
    x, w = shapes
    _require(len(x) == 4 and len(w) == 4, "Conv2D needs rank-4 input and weight")
    groups = attrs["groups"]
    _require(groups >= 1, "groups must be positive")
    c = x[_channel_axis(layout)]
    if layout == NCHW:
        oc, icg, kh, kw = w
    else:
        kh, kw, icg, oc = w
    _require(icg * groups == c, f"input channels {c} != weight in-channels {icg} * groups {groups}")
    _require(oc % groups == 0, f"out channels {oc} not divisible by groups {groups}")
    oh, ow = _conv_like_window(x, kh, kw, attrs, layout, dilations=True)
    return (x[0], oc, oh, ow) if layout == NCHW else (x[0], oh, ow, oc)


def _infer_depthwise(shapes, attrs, layout):
    x, w = shapes
    _require(len(x) == 4 and len(w) == 4, "DepthwiseConv2D needs rank-4 input and weight")
    c = x[_channel_axis(layout)]
    if layout == NCHW:
        oc, one, kh, kw = w
        _require(one == 1, "depthwise weight must have a unit in-channel axis")
        _require(oc % c == 0, f"depthwise out channels {oc} not a multiple of input channels {c}")
    else:
        kh, kw, wc, mult = w
        _require(wc == c, f"depthwise weight channels {wc} != input channels {c}")
        oc = wc * mult
    oh, ow = _conv_like_window(x, kh, kw, attrs, layout, dilations=True)
    return (x[0], oc, oh, ow) if layout == NCHW else (x[0], oh, ow, oc)


def _infer_dense(shapes, attrs, layout):
    x, w = shapes
    _require(len(x) == 2 and len(w) == 2, "Dense needs rank-2 input and weight")
    out_f, in_f = w
    _require(x[1] == in_f, f"input features {x[1]} != weight in-features {in_f}")
    return (x[0], out_f)


def _infer_bias_add(shapes, attrs, layout):
    x, b = shapes
    _require(len(b) == 1, "bias must be rank 1")
    if len(x) == 4:
        c = x[_channel_axis(layout)]
    elif len(x) == 2:
        c = x[1]
    else:
        raise ShapeProblem("BiasAdd expects rank-2 or rank-4 input")
    _require(b[0] == c, f"bias length {b[0]} != channel count {c}")
    return x


def _infer_elementwise(shapes, attrs, layout):
    return shapes[0]


def _infer_pool(shapes, attrs, layout):
    (x,) = shapes
    _require(len(x) == 4, "pooling expects a rank-4 input")
    kh, kw = attrs["kernel"]
    oh, ow = _conv_like_window(x, kh, kw, attrs, layout, dilations=False)
    c = x[_channel_axis(layout)]
    return (x[0], c, oh, ow) if layout == NCHW else (x[0], oh, ow, c)


def _infer_global_avg_pool(shapes, attrs, layout):
    (x,) = shapes
    _require(len(x) == 4, "GlobalAvgPool2D expects a rank-4 input")
    return (x[0], x[_channel_axis(layout)])


def _infer_batchnorm(shapes, attrs, layout):
    x = shapes[0]
    _require(len(x) == 4, "BatchNorm expects a rank-4 input")
    c = x[_channel_axis(layout)]
    for name, s in zip(("scale", "shift", "mean", "variance"), shapes[1:]):
        _require(s == (c,), f"BatchNorm {name} shape {s} != ({c},)")
    return x


def _infer_softmax(shapes, attrs, layout):
    (x,) = shapes
    _require(len(x) >= 1, "Softmax needs at least rank 1")
    return x


def _infer_flatten(shapes, attrs, layout):
    (x,) = shapes
    _require(len(x) >= 1, "Flatten needs at least rank 1")
    return (x[0], math.prod(x[1:]) if len(x) > 1 else 1)


def _infer_reshape(shapes, attrs, layout):
    (x,) = shapes
    target = list(attrs["shape"])
    _require(sum(1 for d in target if d == -1) <= 1, "at most one -1 extent")
    _require(all(d >= 1 or d == -1 for d in target), "extents must be positive or -1")
    total = math.prod(x) if x else 1
    known = math.prod(d for d in target if d != -1)
    if -1 in target:
        _require(known > 0 and total % known == 0,
                 f"cannot fill -1: {total} elements over {known}")
        target[target.index(-1)] = total // known
    _require(math.prod(target) == total,
             f"reshape to {target} changes element count {total}")
    return tuple(target)


def _infer_pad(shapes, attrs, layout):
    (x,) = shapes
    pads = attrs["pads"]
    _require(len(pads) == 2 * len(x), f"pads needs {2 * len(x)} amounts for rank {len(x)}")
    _require(all(p >= 0 for p in pads), "pad amounts must be non-negative")
    return tuple(d + pads[2 * i] + pads[2 * i + 1] for i, d in enumerate(x))


def _infer_add(shapes, attrs, layout):
    a, b = shapes
    _require(a == b, f"Add operands differ: {a} vs {b}")
    return a


def _infer_concat(shapes, attrs, layout):
    axis = attrs["axis"]
    rank = len(shapes[0])
    _require(0 <= axis < rank, f"concat axis {axis} out of range for rank {rank}")
    for s in shapes[1:]:
        _require(len(s) == rank, "concat operands must share rank")
        for i in range(rank):
            _require(i == axis or s[i] == shapes[0][i],
                     f"concat operands differ off-axis: {shapes[0]} vs {s}")
    out = list(shapes[0])
    out[axis] = sum(s[axis] for s in shapes)
    return tuple(out)


_CONV_ATTRS = {"strides": "int_list", "pads": "int_list", "dilations": "int_list"}
_POOL_ATTRS = {"kernel": "int_list", "strides": "int_list", "pads": "int_list"}

OP_SCHEMAS: dict[str, OpSchema] = {
    "Conv2D": OpSchema({**_CONV_ATTRS, "groups": "int"}, 2, 2, {1: "weight"}, _infer_conv2d),
    "DepthwiseConv2D": OpSchema(dict(_CONV_ATTRS), 2, 2, {1: "weight"}, _infer_depthwise),
    "Dense": OpSchema({}, 2, 2, {1: "weight"}, _infer_dense),
    "BiasAdd": OpSchema({}, 2, 2, {1: "bias"}, _infer_bias_add),
    "ReLU": OpSchema({}, 1, 1, {}, _infer_elementwise),
    "ReLU6": OpSchema({}, 1, 1, {}, _infer_elementwise),
    "MaxPool2D": OpSchema(dict(_POOL_ATTRS), 1, 1, {}, _infer_pool),
    "AvgPool2D": OpSchema(dict(_POOL_ATTRS), 1, 1, {}, _infer_pool),
    "GlobalAvgPool2D": OpSchema({}, 1, 1, {}, _infer_global_avg_pool),
    "BatchNorm": OpSchema(
        {"epsilon": "float"}, 5, 5,
        {1: "batchnorm", 2: "batchnorm", 3: "batchnorm", 4: "batchnorm"},
        _infer_batchnorm,
    ),
    "Softmax": OpSchema({}, 1, 1, {}, _infer_softmax),
    "Flatten": OpSchema({}, 1, 1, {}, _infer_flatten),
    "Reshape": OpSchema({"shape": "int_list"}, 1, 1, {}, _infer_reshape),
    "Pad": OpSchema({"pads": "int_list"}, 1, 1, {}, _infer_pad),
    "Add": OpSchema({}, 2, 2, {}, _infer_add),
    "Concat": OpSchema({"axis": "int"}, 2, -1, {}, _infer_concat),
}

OP_TYPES = frozenset(OP_SCHEMAS)


def attr_kind_ok(kind: str, value) -> bool:
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "int_list":
        return (
            isinstance(value, (list, tuple))
            and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
        )
    return False


def infer_output_shape(op_type: str, input_shapes: list[tuple[int, ...]],
                       attrs: dict, layout: str) -> tuple[int, ...]:
    """Output shape of one node. Raises ShapeProblem on inconsistency."""
    schema = OP_SCHEMAS.get(op_type)
    if schema is None:
        raise ShapeProblem(f"unknown op {op_type!r}")
    n = len(input_shapes)
    if n < schema.min_inputs or (schema.max_inputs != -1 and n > schema.max_inputs):
        raise ShapeProblem(f"{op_type} got {n} inputs")
    return schema.infer(input_shapes, attrs, layout)
