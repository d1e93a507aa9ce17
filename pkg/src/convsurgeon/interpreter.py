"""Deterministic reference executor with per-node activation capture.

execute() is a pure function of (model, input): no global state, no
thread-count sensitivity, bitwise-identical traces across runs. NHWC
models are canonicalized to NCHW on entry, so callers always supply
inputs in canonical NCHW shape and traces always speak canonical shapes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import IoFailure, ShapeMismatch, ValidationFailed
from .nmif import ModelGraph, infer_shapes, topological_order, validate_model
from .ops import NCHW, ShapeProblem
from .tensors import DType, TensorData, read_nt, write_nt

DEFAULT_K = 5


@dataclass(frozen=True)
class ActivationTrace:
    input_id: str
    entries: tuple[tuple[str, str, TensorData], ...]  # (node_id, output_name, tensor)
    top_k: tuple[tuple[int, float], ...]
    non_finite: tuple[str, ...] = ()  # node ids whose output holds NaN/Inf

    @property
    def top1(self) -> int:
        return self.top_k[0][0]

    def labels(self) -> list[int]:
        return [idx for idx, _ in self.top_k]


def execute(model: ModelGraph, input: TensorData, capture: bool = True,
            k: int = DEFAULT_K, input_id: str = "") -> ActivationTrace:
    """Run the model on one input; collect per-node outputs when capture
    is set and always produce top-k labels from the final output.

    Non-finite activations are recorded in the trace, not raised: a
    conversion fault may legitimately overflow, and the localizer needs
    to see where that starts.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if model.layout != NCHW:
        from .layout import canonicalize_layout

        model = canonicalize_layout(model)
    violations = validate_model(model)
    if violations:
        raise ValidationFailed(violations, context="execute requires a valid model")
    if len(model.inputs) != 1:
        raise ShapeMismatch("<graph input>", f"expected one graph input, model has {len(model.inputs)}")
    graph_in = model.inputs[0]
    if input.dtype != graph_in.dtype or input.shape != graph_in.shape:
        raise ShapeMismatch(
            "<graph input>",
            f"model expects {graph_in.dtype.value}{list(graph_in.shape)}, "
            f"got {input.dtype.value}{list(input.shape)}")

    shapes = infer_shapes(model)
    values: dict[str, np.ndarray] = {graph_in.name: input.array}
    for name, tensor in model.initializers.items():
        values[name] = tensor.array

    entries: list[tuple[str, str, TensorData]] = []
    non_finite: list[str] = []
    final_value: np.ndarray | None = None
    final_name = model.outputs[0].name

    for idx in topological_order(model):
        node = model.nodes[idx]
        ins = [values[name] for name in node.inputs]
        out = _run_node(node.op_type, node.attrs, ins, shapes[node.outputs[0]])
        if out.shape != shapes[node.outputs[0]]:
            raise ShapeMismatch(
                node.id, f"kernel produced {out.shape}, inferred {shapes[node.outputs[0]]}")
        values[node.outputs[0]] = out
        if out.dtype == np.float32 and not np.isfinite(out).all():
            non_finite.append(node.id)
        if capture:
            entries.append((node.id, node.outputs[0],
                            TensorData.from_array(out, dtype=DType.F32)))
        if node.outputs[0] == final_name:
            final_value = out

    if final_value is None:
        raise ShapeMismatch("<graph output>", f"output {final_name!r} was never produced")

    producer = model.producer_of(final_name)
    top_k = _rank_output(final_value, producer.op_type if producer else "", k)
    return ActivationTrace(input_id=input_id, entries=tuple(entries),
                           top_k=tuple(top_k), non_finite=tuple(non_finite))


def _run_node(op_type: str, attrs: dict, ins: list[np.ndarray],
              out_shape: tuple[int, ...]) -> np.ndarray:
    if op_type == "Conv2D":
        return kernels.conv2d(ins[0], ins[1], attrs["strides"], attrs["pads"],
                              attrs["dilations"], attrs["groups"])
    if op_type == "DepthwiseConv2D":
        return kernels.depthwise_conv2d(ins[0], ins[1], attrs["strides"],
                                        attrs["pads"], attrs["dilations"])
    if op_type == "Dense":
        return kernels.dense(ins[0], ins[1])
    if op_type == "BiasAdd":
        return kernels.bias_add(ins[0], ins[1])
    if op_type == "ReLU":
        return kernels.relu(ins[0])
    if op_type == "ReLU6":
        return kernels.relu6(ins[0])
    if op_type == "MaxPool2D":
        return kernels.maxpool2d(ins[0], attrs["kernel"], attrs["strides"], attrs["pads"])
    if op_type == "AvgPool2D":
        return kernels.avgpool2d(ins[0], attrs["kernel"], attrs["strides"], attrs["pads"])
    if op_type == "GlobalAvgPool2D":
        return kernels.global_avgpool2d(ins[0])
    if op_type == "BatchNorm":
        return kernels.batchnorm(ins[0], ins[1], ins[2], ins[3], ins[4], attrs["epsilon"])
    if op_type == "Softmax":
        return kernels.softmax(ins[0])
    if op_type == "Flatten":
        return kernels.flatten(ins[0])
    if op_type == "Reshape":
        # -1 in the attr was already resolved by static inference
        return kernels.reshape(ins[0], out_shape)
    if op_type == "Pad":
        return kernels.pad(ins[0], attrs["pads"])
    if op_type == "Add":
        return kernels.add(ins[0], ins[1])
    if op_type == "Concat":
        return kernels.concat(ins, attrs["axis"])
    raise ShapeProblem(f"no kernel for op {op_type!r}")


def _rank_output(final: np.ndarray, producer_op: str, k: int) -> list[tuple[int, float]]:
    flat = np.ascontiguousarray(final).reshape(final.shape[0], -1)
    if producer_op == "Softmax" and final.ndim == 2:
        probs = flat
    else:
        probs = kernels.softmax(flat)
    scores = probs[0]
    return _topk(scores, min(k, scores.shape[0]))


def _topk(scores: np.ndarray, k: int) -> list[tuple[int, float]]:
    # NaN scores rank last; ties broken by ascending class index
    keys = np.where(np.isnan(scores), -np.inf, scores.astype(np.float64))
    order = sorted(range(scores.shape[0]), key=lambda i: (-keys[i], i))
    return [(i, float(scores[i])) for i in order[:k]]


def topk_labels(logits: TensorData, k: int) -> list[tuple[int, float]]:
    """Top-k (class_index, score) pairs from a rank-2 [1, C] tensor,
    score descending, index-ascending tie-break."""
    if logits.rank != 2 or logits.shape[0] != 1:
        raise ShapeMismatch("<logits>", f"expected [1, C], got {list(logits.shape)}")
    scores = logits.array[0]
    if k < 1 or k > scores.shape[0]:
        raise ValueError(f"k={k} out of range for {scores.shape[0]} classes")
    return _topk(scores, k)


# ---------------------------------------------------------------------------
# Trace directories
# ---------------------------------------------------------------------------


def export_trace(trace: ActivationTrace, out_dir: str | Path) -> None:
    """One `.nt` per captured node, named `<seq>_<node_id>.nt`, plus
    `trace.json` with the execution order and top-k."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        index = {
            "input_id": trace.input_id,
            "order": [node_id for node_id, _, _ in trace.entries],
            "outputs": [name for _, name, _ in trace.entries],
            "top_k": [[idx, score] for idx, score in trace.top_k],
            "non_finite": list(trace.non_finite),
        }
        for seq, (node_id, _, tensor) in enumerate(trace.entries):
            write_nt(out_dir / f"{seq:04d}_{node_id}.nt", tensor)
        (out_dir / "trace.json").write_text(
            json.dumps(index, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write trace to {out_dir}: {exc}") from exc


def load_trace(trace_dir: str | Path) -> ActivationTrace:
    trace_dir = Path(trace_dir)
    try:
        index = json.loads((trace_dir / "trace.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"cannot read trace index in {trace_dir}: {exc}") from exc
    entries = []
    for seq, (node_id, name) in enumerate(zip(index["order"], index["outputs"])):
        tensor = read_nt(trace_dir / f"{seq:04d}_{node_id}.nt", allow_non_finite=True)
        entries.append((node_id, name, tensor))
    return ActivationTrace(
        input_id=index["input_id"],
        entries=tuple(entries),
        top_k=tuple((int(i), float(s)) for i, s in index["top_k"]),
        non_finite=tuple(index.get("non_finite", [])),
    )
