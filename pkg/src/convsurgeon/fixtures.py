"""Synthetic model/chain fixtures with known injected faults.

Every fixture kind writes NMIF stage containers, a corpus of `.nt`
inputs, and a `ground_truth.json` naming the injected fault site and
edge: the generator knows the answer, so localization results can be
checked against it without any real framework in the loop.

Fault kinds mirror the conversion failures the tool targets: a constant
shift on one conv's weights, a padding attribute flip, a Flatten swapped
for an equivalent Reshape, and a redundant nonzero Pad insertion.

Generation is deterministic per (kind, seed): faulted fixtures are
regenerated with attempt-salted RNG streams until the fault actually
yields a usable scenario (a discrepancy rate strictly between 0 and 1,
and for parameter faults a mean |delta| within 1e-9 of the requested
epsilon despite float32 rounding), so downstream oracles never flake.
"""

from __future__ import annotations

import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import IoFailure, UnsupportedRank
from .interpreter import execute
from .layout import _CONCAT_AXIS_MAP, _dense_perm
from .nmif import ModelGraph, NodeSpec, ValueInfo, infer_shapes, save_model
from .ops import NCHW, NHWC, OP_SCHEMAS
from .tensors import DType, TensorData, write_nt

FIXTURE_KINDS = (
    "smallcnn",
    "clean-chain",
    "chain-param-fault",
    "chain-hyper-fault",
    "chain-substitution",
    "chain-extranode",
)

CHAIN_LABELS = ("source", "mid", "target")
INPUT_SHAPE = (1, 3, 16, 16)
_MAX_ATTEMPTS = 200


def _t(rng: np.random.Generator, shape: tuple[int, ...], scale: float) -> np.ndarray:
    return (rng.standard_normal(shape) * scale).astype(np.float32)


def _conv_scale(fan_in: int) -> float:
    return 1.0 / math.sqrt(fan_in)


def gap_cnn_params(rng: np.random.Generator, classes: int = 10) -> dict[str, np.ndarray]:
    """Parameter arrays for the GAP-head chain architecture, drawn in a
    fixed order so a given RNG state always yields the same model."""
    return {
        "w1": _t(rng, (8, 3, 3, 3), _conv_scale(27)),
        "b1": _t(rng, (8,), 0.1),
        "w2": _t(rng, (8, 8, 3, 3), _conv_scale(72)),
        "b2": _t(rng, (8,), 0.1),
        "w3": _t(rng, (16, 8, 3, 3), _conv_scale(72)),
        "b3": _t(rng, (16,), 0.1),
        "wd": _t(rng, (classes, 16), _conv_scale(16)),
        "bd": _t(rng, (classes,), 0.1),
    }


def build_gap_cnn(params: dict[str, np.ndarray], name: str, prefix: str = "") -> ModelGraph:
    """conv x3 -> GlobalAvgPool -> Flatten -> Dense classifier, NCHW.

    The GAP head keeps the pre-classifier tensor rank 4 with free spatial
    extent, which is what lets structural fixtures insert a Pad without
    breaking downstream shapes.
    """
    p = prefix
    conv = {"strides": [1, 1], "pads": [1, 1, 1, 1], "dilations": [1, 1], "groups": 1}
    conv_s2 = dict(conv, strides=[2, 2])
    classes = params["wd"].shape[0]
    nodes = (
        NodeSpec.make(p + "conv1", "Conv2D", [p + "in", p + "w1"], [p + "c1"], **conv),
        NodeSpec.make(p + "bias1", "BiasAdd", [p + "c1", p + "b1"], [p + "cb1"]),
        NodeSpec.make(p + "relu1", "ReLU", [p + "cb1"], [p + "r1"]),
        NodeSpec.make(p + "conv2", "Conv2D", [p + "r1", p + "w2"], [p + "c2"], **conv),
        NodeSpec.make(p + "bias2", "BiasAdd", [p + "c2", p + "b2"], [p + "cb2"]),
        NodeSpec.make(p + "relu2", "ReLU", [p + "cb2"], [p + "r2"]),
        NodeSpec.make(p + "conv3", "Conv2D", [p + "r2", p + "w3"], [p + "c3"], **conv_s2),
        NodeSpec.make(p + "bias3", "BiasAdd", [p + "c3", p + "b3"], [p + "cb3"]),
        NodeSpec.make(p + "relu3", "ReLU", [p + "cb3"], [p + "r3"]),
        NodeSpec.make(p + "gap", "GlobalAvgPool2D", [p + "r3"], [p + "g"]),
        NodeSpec.make(p + "flat", "Flatten", [p + "g"], [p + "f"]),
        NodeSpec.make(p + "dense", "Dense", [p + "f", p + "wd"], [p + "d"]),
        NodeSpec.make(p + "biasd", "BiasAdd", [p + "d", p + "bd"], [p + "logits"]),
    )
    inits = {p + key: TensorData.from_array(arr) for key, arr in params.items()}
    return ModelGraph(
        name=name,
        inputs=(ValueInfo(p + "in", DType.F32, INPUT_SHAPE),),
        outputs=(ValueInfo(p + "logits", DType.F32, (1, classes)),),
        nodes=nodes,
        initializers=inits,
        layout=NCHW,
    )


def smallcnn_params(rng: np.random.Generator, classes: int = 10) -> dict[str, np.ndarray]:
    return {
        "w1": _t(rng, (8, 3, 3, 3), _conv_scale(27)),
        "b1": _t(rng, (8,), 0.1),
        "w2": _t(rng, (12, 8, 3, 3), _conv_scale(72)),
        "b2": _t(rng, (12,), 0.1),
        "w3": _t(rng, (16, 12, 3, 3), _conv_scale(108)),
        "b3": _t(rng, (16,), 0.1),
        "wd": _t(rng, (classes, 256), _conv_scale(256)),
        "bd": _t(rng, (classes,), 0.1),
    }


def build_smallcnn(params: dict[str, np.ndarray], name: str = "smallcnn",
                   prefix: str = "") -> ModelGraph:
    """conv x3 with a MaxPool and a rank-4 Flatten into Dense, NCHW.

    The rank-4 flatten is the layout-sensitive path: its NHWC twin needs
    the Dense weight columns re-indexed, which is exactly what the
    canonicalization tests exercise.
    """
    p = prefix
    conv = {"strides": [1, 1], "pads": [1, 1, 1, 1], "dilations": [1, 1], "groups": 1}
    conv_s2 = dict(conv, strides=[2, 2])
    pool = {"kernel": [2, 2], "strides": [2, 2], "pads": [0, 0, 0, 0]}
    classes = params["wd"].shape[0]
    nodes = (
        NodeSpec.make(p + "conv1", "Conv2D", [p + "in", p + "w1"], [p + "c1"], **conv),
        NodeSpec.make(p + "bias1", "BiasAdd", [p + "c1", p + "b1"], [p + "cb1"]),
        NodeSpec.make(p + "relu1", "ReLU", [p + "cb1"], [p + "r1"]),
        NodeSpec.make(p + "pool1", "MaxPool2D", [p + "r1"], [p + "m1"], **pool),
        NodeSpec.make(p + "conv2", "Conv2D", [p + "m1", p + "w2"], [p + "c2"], **conv),
        NodeSpec.make(p + "bias2", "BiasAdd", [p + "c2", p + "b2"], [p + "cb2"]),
        NodeSpec.make(p + "relu2", "ReLU", [p + "cb2"], [p + "r2"]),
        NodeSpec.make(p + "conv3", "Conv2D", [p + "r2", p + "w3"], [p + "c3"], **conv_s2),
        NodeSpec.make(p + "bias3", "BiasAdd", [p + "c3", p + "b3"], [p + "cb3"]),
        NodeSpec.make(p + "relu3", "ReLU", [p + "cb3"], [p + "r3"]),
        NodeSpec.make(p + "flat", "Flatten", [p + "r3"], [p + "f"]),
        NodeSpec.make(p + "dense", "Dense", [p + "f", p + "wd"], [p + "d"]),
        NodeSpec.make(p + "biasd", "BiasAdd", [p + "d", p + "bd"], [p + "logits"]),
    )
    inits = {p + key: TensorData.from_array(arr) for key, arr in params.items()}
    return ModelGraph(
        name=name,
        inputs=(ValueInfo(p + "in", DType.F32, INPUT_SHAPE),),
        outputs=(ValueInfo(p + "logits", DType.F32, (1, classes)),),
        nodes=nodes,
        initializers=inits,
        layout=NCHW,
    )


# ---------------------------------------------------------------------------
# NHWC twin construction (inverse canonicalization, for layout tests)
# ---------------------------------------------------------------------------


_FROM_NCHW = (0, 2, 3, 1)
_CONCAT_AXIS_INV = {v: k for k, v in _CONCAT_AXIS_MAP.items()}


def to_nhwc(model: ModelGraph) -> ModelGraph:
    """Rewrite an NCHW model as its NHWC twin, the exact inverse of
    canonicalize_layout, so canonicalize_layout(to_nhwc(m)) returns a
    graph whose tensors are bit-identical to m's."""
    if model.layout != NCHW:
        raise UnsupportedRank(model.name, "to_nhwc expects an NCHW model")
    shapes = infer_shapes(model)

    def rank(name: str) -> int:
        return len(shapes[name])

    flatten_geom: dict[str, tuple[int, int, int]] = {}
    for node in model.nodes:
        in_shape = shapes[node.inputs[0]] if node.inputs else ()
        out_shape = shapes[node.outputs[0]]
        if node.op_type in ("Flatten", "Reshape") and len(in_shape) == 4:
            if len(out_shape) == 2 and out_shape[0] == in_shape[0]:
                # geometry recorded as NHWC (h, w, c)
                flatten_geom[node.outputs[0]] = (in_shape[2], in_shape[3], in_shape[1])
            else:
                raise UnsupportedRank(node.id, "general rank-4 Reshape has no NHWC twin")
        elif node.op_type == "Softmax" and len(in_shape) == 4:
            raise UnsupportedRank(node.id, "rank-4 Softmax has no NHWC twin")

    new_inits: dict[str, TensorData] = {}
    for node in model.nodes:
        schema = OP_SCHEMAS[node.op_type]
        for slot, name in enumerate(node.inputs):
            if name not in model.initializers or name in new_inits:
                continue
            t = model.initializers[name]
            role = schema.param_slots.get(slot)
            if role == "weight" and node.op_type == "Conv2D":
                arr = t.array.transpose(2, 3, 1, 0)
            elif role == "weight" and node.op_type == "DepthwiseConv2D":
                c_in = shapes[node.inputs[0]][1]
                cm, _, kh, kw = t.shape
                arr = t.array.reshape(c_in, cm // c_in, kh, kw).transpose(2, 3, 0, 1)
            elif role == "weight" and node.op_type == "Dense" and node.inputs[0] in flatten_geom:
                # the forward perm maps hwc columns to chw; argsort undoes it
                h, w, c = flatten_geom[node.inputs[0]]
                arr = t.array[:, np.argsort(_dense_perm(h, w, c))]
            elif role is None and len(t.shape) == 4:
                arr = t.array.transpose(_FROM_NCHW)
            else:
                arr = t.array
            new_inits[name] = TensorData.from_array(np.ascontiguousarray(arr), dtype=t.dtype)
    # initializers kept in original dict order
    new_inits = {name: new_inits[name] for name in model.initializers}

    new_nodes = []
    for node in model.nodes:
        attrs = dict(node.attrs)
        if node.op_type == "Pad" and rank(node.inputs[0]) == 4:
            p = attrs["pads"]
            attrs["pads"] = [p[0], p[1], p[4], p[5], p[6], p[7], p[2], p[3]]
        elif node.op_type == "Concat" and rank(node.inputs[0]) == 4:
            attrs["axis"] = _CONCAT_AXIS_INV[attrs["axis"]]
        new_nodes.append(replace(node, attrs=attrs))

    def permute_vi(vi: ValueInfo) -> ValueInfo:
        if len(vi.shape) != 4:
            return vi
        s = vi.shape
        return replace(vi, shape=(s[0], s[2], s[3], s[1]))

    return ModelGraph(
        name=model.name,
        inputs=tuple(permute_vi(vi) for vi in model.inputs),
        outputs=tuple(permute_vi(vi) for vi in model.outputs),
        nodes=tuple(new_nodes),
        initializers=new_inits,
        layout=NHWC,
        metadata=dict(model.metadata),
    )


# ---------------------------------------------------------------------------
# Fault injectors
# ---------------------------------------------------------------------------


def perturb_weight(model: ModelGraph, node_id: str, epsilon: float) -> ModelGraph:
    """w' = float32(w + epsilon) on the node's weight tensor."""
    node = model.node_by_id(node_id)
    name = node.inputs[1]
    old = model.initializers[name]
    shifted = (old.array.astype(np.float64) + epsilon).astype(np.float32)
    inits = dict(model.initializers)
    inits[name] = TensorData.from_array(shifted)
    return replace(model, initializers=inits)


def flip_attr(model: ModelGraph, node_id: str, attr: str, value) -> ModelGraph:
    node = model.node_by_id(node_id)
    new_node = replace(node, attrs={**node.attrs, attr: value})
    return replace(model, nodes=tuple(new_node if n.id == node_id else n
                                      for n in model.nodes))


def swap_flatten_for_reshape(model: ModelGraph, flatten_id: str,
                             new_id: str) -> ModelGraph:
    """The classic benign substitution: Flatten becomes Reshape-[batch,-1]."""
    node = model.node_by_id(flatten_id)
    batch = infer_shapes(model)[node.inputs[0]][0]
    new_node = NodeSpec.make(new_id, "Reshape", node.inputs, node.outputs,
                             shape=[batch, -1])
    return replace(model, nodes=tuple(new_node if n.id == flatten_id else n
                                      for n in model.nodes))


def insert_pad_before(model: ModelGraph, consumer_id: str, pad_id: str,
                      spatial: int) -> ModelGraph:
    """Splice a Pad with the given NCHW spatial amounts onto a node's
    data input. Nonzero amounts grow a zero ring, which shifts every
    downstream average; zero amounts make a true no-op node."""
    consumer = model.node_by_id(consumer_id)
    feed = consumer.inputs[0]
    out_name = pad_id + "_out"
    pad_node = NodeSpec.make(pad_id, "Pad", [feed], [out_name],
                             pads=[0, 0, 0, 0, spatial, spatial, spatial, spatial])
    nodes = []
    for n in model.nodes:
        if n.id == consumer_id:
            nodes.append(pad_node)
            n = replace(n, inputs=tuple(out_name if name == feed else name
                                        for name in n.inputs))
        nodes.append(n)
    return replace(model, nodes=tuple(nodes))


# ---------------------------------------------------------------------------
# Fixture generation
# ---------------------------------------------------------------------------


_GAP_BASES = ["conv1", "bias1", "relu1", "conv2", "bias2", "relu2",
              "conv3", "bias3", "relu3", "gap", "flat", "dense", "biasd"]
_WEIGHT_KEYS = {"conv1": "w1", "conv2": "w2", "conv3": "w3", "dense": "wd"}


def _corpus_arrays(rng: np.random.Generator, n: int) -> list[np.ndarray]:
    return [rng.standard_normal(INPUT_SHAPE).astype(np.float32) for _ in range(n)]


def _top1_rate(source: ModelGraph, target: ModelGraph,
               inputs: list[np.ndarray]) -> float:
    mismatches = 0
    for arr in inputs:
        t = TensorData.from_array(arr)
        a = execute(source, t, capture=False, k=1).top1
        b = execute(target, t, capture=False, k=1).top1
        mismatches += int(a != b)
    return mismatches / len(inputs)


def _stage_bases(kind: str, faulted: bool) -> list[str]:
    bases = list(_GAP_BASES)
    if faulted and kind == "chain-substitution":
        bases[bases.index("flat")] = "reshape"
    return bases


def _build_chain(kind: str, seed: int, epsilon: float, site: str | None,
                 edge: int | None, corpus_n: int, classes: int):
    """Deterministic retry loop: salt the RNG with the attempt index until
    the injected fault produces a usable scenario."""
    for attempt in range(_MAX_ATTEMPTS):
        rng = np.random.default_rng([seed, attempt])
        params = gap_cnn_params(rng, classes=classes)
        corpus = _corpus_arrays(rng, corpus_n)
        fault_edge = edge if edge is not None else int(rng.integers(0, 2))
        chosen_site = site or str(rng.choice(["conv1", "conv2", "conv3"]))

        stages = [build_gap_cnn(params, name=f"stage{i}", prefix=f"s{i}_")
                  for i in range(3)]
        faulted = list(range(fault_edge + 1, 3))
        truth: dict[str, object] = {
            "kind": kind,
            "seed": seed,
            "attempt": attempt,
            "labels": list(CHAIN_LABELS),
            "stage_paths": [f"stage{i}.nmif" for i in range(3)],
            "corpus": "corpus",
            "fault_edge": None if kind == "clean-chain" else [fault_edge, fault_edge + 1],
            "fault": None,
        }

        if kind == "chain-param-fault":
            for i in faulted:
                stages[i] = perturb_weight(stages[i], f"s{i}_{chosen_site}", epsilon)
            truth["fault"] = {
                "type": "param", "site": chosen_site, "slot": "weight",
                "epsilon": epsilon,
                "faulted_nodes": [f"s{i}_{chosen_site}" for i in faulted],
            }
            key = _WEIGHT_KEYS[chosen_site]
            clean = stages[0].initializers[f"s0_{key}"].array.astype(np.float64)
            shifted = stages[-1].initializers[f"s2_{key}"].array.astype(np.float64)
            mean_delta = float(np.abs(shifted - clean).mean())
            if abs(mean_delta - epsilon) > 1e-9:
                continue  # float32 rounding pushed the mean out of spec
        elif kind == "chain-hyper-fault":
            flipped = [2, 2, 0, 0]  # same output shape as [1,1,1,1], shifted window
            for i in faulted:
                stages[i] = flip_attr(stages[i], f"s{i}_{chosen_site}", "pads", flipped)
            truth["fault"] = {
                "type": "hyper", "site": chosen_site, "attr": "pads",
                "source_value": [1, 1, 1, 1], "target_value": flipped,
                "faulted_nodes": [f"s{i}_{chosen_site}" for i in faulted],
            }
        elif kind == "chain-substitution":
            for i in faulted:
                stages[i] = swap_flatten_for_reshape(stages[i], f"s{i}_flat",
                                                     f"s{i}_reshape")
                stages[i] = insert_pad_before(stages[i], f"s{i}_gap",
                                              f"s{i}_pad_extra", 1)
            truth["fault"] = {
                "type": "substitution", "substituted_base": "flat",
                "replacement_op": "Reshape",
                "substituted_nodes": [f"s{i}_reshape" for i in faulted],
                "inserted_nodes": [f"s{i}_pad_extra" for i in faulted],
            }
        elif kind == "chain-extranode":
            for i in faulted:
                stages[i] = insert_pad_before(stages[i], f"s{i}_gap",
                                              f"s{i}_pad_extra", 1)
            truth["fault"] = {
                "type": "extranode", "inserted_op": "Pad",
                "inserted_nodes": [f"s{i}_pad_extra" for i in faulted],
                "consumer_base": "gap",
            }

        truth["name_maps"] = [
            {f"s{i}_{a}": f"s{i + 1}_{b}"
             for a, b in zip(_stage_bases(kind, i in faulted),
                             _stage_bases(kind, (i + 1) in faulted))}
            for i in range(2)
        ]

        if kind == "clean-chain":
            return stages, corpus, truth
        rate = _top1_rate(stages[0], stages[-1], corpus)
        if 0.0 < rate < 1.0:
            truth["observed_rate"] = rate
            return stages, corpus, truth
    raise IoFailure(f"no usable {kind} fixture found for seed {seed} "
                    f"within {_MAX_ATTEMPTS} attempts")


def gen_fixture(kind: str, seed: int, out_dir: str | Path, epsilon: float = 0.01,
                site: str | None = None, edge: int | None = None,
                corpus_n: int = 100, classes: int = 10) -> dict:
    """Write a fixture to out_dir and return its ground truth record.

    Identical arguments always produce byte-identical files.
    """
    if kind not in FIXTURE_KINDS:
        raise ValueError(f"unknown fixture kind {kind!r}; choose from {FIXTURE_KINDS}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out}: {exc}") from exc

    if kind == "smallcnn":
        rng = np.random.default_rng([seed, 0])
        model = build_smallcnn(smallcnn_params(rng, classes=classes))
        corpus = _corpus_arrays(rng, corpus_n)
        truth: dict[str, object] = {
            "kind": kind, "seed": seed, "attempt": 0,
            "model_path": "smallcnn.nmif", "corpus": "corpus",
            "classes": classes, "fault": None,
        }
        save_model(model, out / "smallcnn.nmif")
    else:
        stages, corpus, truth = _build_chain(kind, seed, epsilon, site, edge,
                                             corpus_n, classes)
        for i, stage in enumerate(stages):
            save_model(stage, out / f"stage{i}.nmif")
        chain_spec = {"stages": [{"label": label, "path": path}
                                 for label, path in zip(CHAIN_LABELS,
                                                        truth["stage_paths"])]}
        (out / "chain.json").write_text(json.dumps(chain_spec, indent=2) + "\n",
                                        encoding="utf-8")

    corpus_dir = out / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    for i, arr in enumerate(corpus):
        write_nt(corpus_dir / f"input_{i:03d}.nt", TensorData.from_array(arr))
    (out / "ground_truth.json").write_text(json.dumps(truth, indent=2) + "\n",
                                           encoding="utf-8")
    return truth
