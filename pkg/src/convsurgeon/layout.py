"""Layout canonicalization: rewrite an NHWC model into NCHW form.

The rewrite permutes rank-4 activation shapes with (0,3,1,2), conv
weights HWIO -> OIHW, depthwise weights [kh,kw,c,mult] -> [c*mult,1,kh,kw],
per-axis attributes (Pad amounts, Concat axis), and the column order of
any Dense weight that consumes a flattened rank-4 tensor (NHWC flattening
interleaves channels differently than NCHW, so the matrix columns must be
re-indexed to keep the product identical).

Node ids and value names are preserved, so diffs and traces computed on
the canonical form still speak the original model's vocabulary. For
constructs whose NHWC meaning cannot be expressed after permutation
(rank-4 Softmax, general rank-4 Reshape, a flattened tensor consumed by
anything but Dense) the rewrite refuses with UnsupportedRank rather than
silently changing semantics.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .errors import UnsupportedRank, ValidationFailed
from .nmif import ModelGraph, NodeSpec, ValueInfo, infer_shapes, validate_model
from .ops import NCHW, NHWC, OP_SCHEMAS
from .tensors import TensorData

_TO_NCHW = (0, 3, 1, 2)
_CONCAT_AXIS_MAP = {0: 0, 1: 2, 2: 3, 3: 1}


def _permuted_value(vi: ValueInfo) -> ValueInfo:
    if len(vi.shape) != 4:
        return vi
    s = vi.shape
    return replace(vi, shape=(s[0], s[3], s[1], s[2]))


def _act4(t: TensorData) -> TensorData:
    return TensorData.from_array(t.array.transpose(_TO_NCHW), dtype=t.dtype)


def _conv_weight(t: TensorData) -> TensorData:
    return TensorData.from_array(t.array.transpose(3, 2, 0, 1), dtype=t.dtype)


def _dw_weight(t: TensorData) -> TensorData:
    kh, kw, c, mult = t.shape
    arr = t.array.transpose(2, 3, 0, 1).reshape(c * mult, 1, kh, kw)
    return TensorData.from_array(arr, dtype=t.dtype)


def _dense_perm(h: int, w: int, c: int) -> np.ndarray:
    # new column j (c-major order) reads old column (h-major order)
    return np.arange(h * w * c).reshape(h, w, c).transpose(2, 0, 1).ravel()


def canonicalize_layout(model: ModelGraph) -> ModelGraph:
    """Identity on NCHW models; full rewrite for NHWC ones."""
    if model.layout == NCHW:
        return model
    if model.layout != NHWC:
        raise UnsupportedRank(model.name, f"unknown layout {model.layout!r}")
    violations = validate_model(model)
    if violations:
        raise ValidationFailed(violations, context="cannot canonicalize an invalid model")
    shapes = infer_shapes(model)

    def rank(name: str) -> int:
        return len(shapes[name])

    # flatten-like producers of rank-4 tensors: output name -> (h, w, c)
    flatten_geom: dict[str, tuple[int, int, int]] = {}
    for node in model.nodes:
        in_shape = shapes[node.inputs[0]] if node.inputs else ()
        if node.op_type == "Flatten" and len(in_shape) == 4:
            flatten_geom[node.outputs[0]] = (in_shape[1], in_shape[2], in_shape[3])
        elif node.op_type == "Reshape" and (len(in_shape) == 4 or rank(node.outputs[0]) == 4):
            out_shape = shapes[node.outputs[0]]
            if len(in_shape) == 4 and len(out_shape) == 2 and out_shape[0] == in_shape[0]:
                flatten_geom[node.outputs[0]] = (in_shape[1], in_shape[2], in_shape[3])
            else:
                raise UnsupportedRank(
                    node.id, "rank-4 Reshape other than a batch flatten is layout-ambiguous")
        elif node.op_type == "Softmax" and len(in_shape) == 4:
            raise UnsupportedRank(
                node.id, "rank-4 Softmax normalizes over channels in NHWC but width in NCHW")

    graph_outputs = {vi.name for vi in model.outputs}
    for name, geom in flatten_geom.items():
        producer = model.producer_of(name)
        if name in graph_outputs:
            raise UnsupportedRank(
                producer.id, "flattened rank-4 tensor as graph output changes element order")
        for consumer, slot in model.consumers_of(name):
            if consumer.op_type != "Dense" or slot != 0:
                raise UnsupportedRank(
                    producer.id,
                    f"flattened rank-4 tensor feeds {consumer.op_type}; "
                    "only Dense absorbs the element reorder")

    # one transform per initializer; conflicting roles are not expressible
    planned: dict[str, tuple[str, object]] = {}

    def plan(name: str, tag: str, fn) -> None:
        if name in planned and planned[name][0] != tag:
            raise UnsupportedRank(
                name, f"initializer used in conflicting layout roles "
                      f"({planned[name][0]} vs {tag})")
        planned[name] = (tag, fn)

    for node in model.nodes:
        schema = OP_SCHEMAS[node.op_type]
        for slot, name in enumerate(node.inputs):
            if name not in model.initializers:
                continue
            role = schema.param_slots.get(slot)
            if role == "weight" and node.op_type == "Conv2D":
                plan(name, "conv-weight", _conv_weight)
            elif role == "weight" and node.op_type == "DepthwiseConv2D":
                plan(name, "dw-weight", _dw_weight)
            elif role == "weight" and node.op_type == "Dense":
                geom = flatten_geom.get(node.inputs[0])
                if geom is None:
                    plan(name, "keep", None)
                else:
                    h, w, c = geom
                    perm = _dense_perm(h, w, c)
                    plan(name, f"dense-perm-{h}x{w}x{c}",
                         lambda t, p=perm: TensorData.from_array(t.array[:, p], dtype=t.dtype))
            elif role is not None:
                plan(name, "keep", None)
            elif rank(name) == 4:
                plan(name, "act4", _act4)
            else:
                plan(name, "keep", None)

    new_inits = {}
    for name, tensor in model.initializers.items():
        _, fn = planned[name]
        new_inits[name] = tensor if fn is None else fn(tensor)

    new_nodes = []
    for node in model.nodes:
        attrs = dict(node.attrs)
        if node.op_type == "Pad" and rank(node.inputs[0]) == 4:
            p = attrs["pads"]
            attrs["pads"] = [p[0], p[1], p[6], p[7], p[2], p[3], p[4], p[5]]
        elif node.op_type == "Concat" and rank(node.inputs[0]) == 4:
            attrs["axis"] = _CONCAT_AXIS_MAP[attrs["axis"]]
        new_nodes.append(replace(node, attrs=attrs))

    return ModelGraph(
        name=model.name,
        inputs=tuple(_permuted_value(vi) for vi in model.inputs),
        outputs=tuple(_permuted_value(vi) for vi in model.outputs),
        nodes=tuple(new_nodes),
        initializers=new_inits,
        layout=NCHW,
        metadata=dict(model.metadata),
    )
