"""The neutral model container: graph types, validation, and disk format.

A model container is a directory holding exactly two files:

``manifest.json``
    UTF-8 JSON with keys ``format_version`` (=1), ``name``, ``layout``
    ("NCHW" | "NHWC"), ``inputs``/``outputs`` (arrays of
    ``{name, dtype, shape}``), ``nodes`` (array of
    ``{id, op_type, attrs, inputs, outputs}`` in topological order), and
    ``initializers`` (array of ``{name, dtype, shape, offset, byte_length}``).
    An optional ``metadata`` object carries tool annotations such as the
    repair edit log; it is omitted when empty.

``tensors.bin``
    Concatenated tensor payloads, each starting at a 64-byte-aligned
    offset. F32 is IEEE-754 binary32 little-endian, I64 two's-complement
    little-endian, both row-major.

Graphs are immutable after load: every transformation produces a new
``ModelGraph``, so loaded models are safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    BlobOutOfBounds,
    CyclicGraph,
    DanglingReference,
    IoFailure,
    MagicMismatch,
    NonFiniteTensor,
    SchemaViolation,
    ValidationFailed,
    VersionUnsupported,
)
from .ops import LAYOUTS, NCHW, NHWC, OP_SCHEMAS, ShapeProblem, attr_kind_ok, infer_output_shape
from .tensors import DType, TensorData

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
BLOB_NAME = "tensors.bin"
BLOB_ALIGNMENT = 64


@dataclass(frozen=True)
class ValueInfo:
    name: str
    dtype: DType
    shape: tuple[int, ...]


@dataclass(frozen=True)
class NodeSpec:
    id: str
    op_type: str
    attrs: dict[str, object]
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]

    @classmethod
    def make(cls, id: str, op_type: str, inputs, outputs, **attrs) -> "NodeSpec":
        return cls(id=id, op_type=op_type, attrs=attrs,
                   inputs=tuple(inputs), outputs=tuple(outputs))


@dataclass(frozen=True)
class ModelGraph:
    name: str
    inputs: tuple[ValueInfo, ...]
    outputs: tuple[ValueInfo, ...]
    nodes: tuple[NodeSpec, ...]
    initializers: dict[str, TensorData]
    layout: str = NCHW
    metadata: dict[str, object] = field(default_factory=dict)

    def node_by_id(self, node_id: str) -> NodeSpec:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise KeyError(node_id)

    def producer_of(self, value: str) -> NodeSpec | None:
        for node in self.nodes:
            if value in node.outputs:
                return node
        return None

    def consumers_of(self, value: str) -> list[tuple[NodeSpec, int]]:
        found = []
        for node in self.nodes:
            for slot, name in enumerate(node.inputs):
                if name == value:
                    found.append((node, slot))
        return found


@dataclass(frozen=True)
class Violation:
    node_id: str | None
    rule: str
    detail: str

    def __str__(self) -> str:
        where = f"[{self.node_id}] " if self.node_id else ""
        return f"{where}{self.rule}: {self.detail}"


@dataclass(frozen=True)
class ConversionChain:
    """Ordered model stages: index 0 is the source, the last is the target."""

    stages: tuple[tuple[str, ModelGraph], ...]

    def __post_init__(self):
        if len(self.stages) < 2:
            raise ValueError("a conversion chain needs at least two stages")
        shapes = {_canonical_input_signature(m) for _, m in self.stages}
        if len(shapes) != 1:
            raise ValueError(f"stages disagree on the canonical graph input: {sorted(shapes)}")

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.stages]

    @property
    def models(self) -> list[ModelGraph]:
        return [m for _, m in self.stages]


def _canonical_input_signature(model: ModelGraph) -> tuple:
    sig = []
    for vi in model.inputs:
        shape = vi.shape
        if model.layout == NHWC and len(shape) == 4:
            shape = (shape[0], shape[3], shape[1], shape[2])
        sig.append((vi.dtype.value, shape))
    return tuple(sig)


# ---------------------------------------------------------------------------
# Topological order
# ---------------------------------------------------------------------------


def topological_order(model: ModelGraph) -> list[int]:
    """Stable Kahn order over node indices (lowest ready index first).

    The identity permutation whenever the node list is already topological,
    so round-tripping a well-formed container preserves node order.
    Raises CyclicGraph if no order exists.
    """
    produced_by: dict[str, int] = {}
    for idx, node in enumerate(model.nodes):
        for out in node.outputs:
            produced_by[out] = idx

    indegree = [0] * len(model.nodes)
    dependents: list[list[int]] = [[] for _ in model.nodes]
    for idx, node in enumerate(model.nodes):
        for name in node.inputs:
            dep = produced_by.get(name)
            if dep is not None and dep != idx:
                indegree[idx] += 1
                dependents[dep].append(idx)

    import heapq

    ready = [i for i, d in enumerate(indegree) if d == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        idx = heapq.heappop(ready)
        order.append(idx)
        for dep in dependents[idx]:
            indegree[dep] -= 1
            if indegree[dep] == 0:
                heapq.heappush(ready, dep)
    if len(order) != len(model.nodes):
        stuck = [model.nodes[i].id for i, d in enumerate(indegree) if d > 0]
        raise CyclicGraph(f"cycle through nodes {stuck}")
    return order


# ---------------------------------------------------------------------------
# Shape inference
# ---------------------------------------------------------------------------


def infer_shapes(model: ModelGraph) -> dict[str, tuple[int, ...]]:
    """Static shapes for every value, honoring the model's layout.

    Raises ShapeProblem (with the node id prefixed) on any inconsistency.
    """
    shapes: dict[str, tuple[int, ...]] = {}
    for vi in model.inputs:
        shapes[vi.name] = vi.shape
    for name, tensor in model.initializers.items():
        shapes[name] = tensor.shape
    for idx in topological_order(model):
        node = model.nodes[idx]
        try:
            in_shapes = [shapes[name] for name in node.inputs]
        except KeyError as exc:
            raise ShapeProblem(f"{node.id}: missing input {exc}") from None
        try:
            out = infer_output_shape(node.op_type, in_shapes, node.attrs, model.layout)
        except ShapeProblem as exc:
            raise ShapeProblem(f"{node.id}: {exc}") from None
        shapes[node.outputs[0]] = out
    return shapes


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_model(model: ModelGraph) -> list[Violation]:
    """All structural invariants, as data. Empty list == clean model.

    Beyond reference/schema checks this also runs static shape inference,
    so a model with no violations is guaranteed not to trap the executor
    on a well-shaped input.
    """
    violations: list[Violation] = []

    if model.layout not in LAYOUTS:
        violations.append(Violation(None, "layout", f"unknown layout {model.layout!r}"))

    produced: dict[str, str] = {}
    for vi in model.inputs:
        produced[vi.name] = "<graph input>"
    for name in model.initializers:
        if name in produced:
            violations.append(Violation(None, "duplicate-value", f"{name!r} defined twice"))
        produced[name] = "<initializer>"

    seen_ids: set[str] = set()
    for node in model.nodes:
        if node.id in seen_ids:
            violations.append(Violation(node.id, "duplicate-node-id", "node id reused"))
        seen_ids.add(node.id)

        schema = OP_SCHEMAS.get(node.op_type)
        if schema is None:
            violations.append(Violation(node.id, "op-type", f"unknown op {node.op_type!r}"))
            continue

        expected = set(schema.attrs)
        actual = set(node.attrs)
        if actual != expected:
            missing = sorted(expected - actual)
            extra = sorted(actual - expected)
            violations.append(Violation(
                node.id, "attr-schema",
                f"{node.op_type} requires attrs {sorted(expected)}; "
                f"missing {missing}, extra {extra}"))
        else:
            for key, kind in schema.attrs.items():
                if not attr_kind_ok(kind, node.attrs[key]):
                    violations.append(Violation(
                        node.id, "attr-schema",
                        f"attr {key!r} must be {kind}, got {node.attrs[key]!r}"))

        n_in = len(node.inputs)
        if n_in < schema.min_inputs or (schema.max_inputs != -1 and n_in > schema.max_inputs):
            violations.append(Violation(
                node.id, "arity",
                f"{node.op_type} takes {schema.min_inputs}"
                f"{'+' if schema.max_inputs == -1 else f'..{schema.max_inputs}'}"
                f" inputs, got {n_in}"))
        if len(node.outputs) != 1:
            violations.append(Violation(node.id, "arity", "every op produces exactly one output"))

        for slot, role in schema.param_slots.items():
            if slot < n_in and node.inputs[slot] not in model.initializers:
                violations.append(Violation(
                    node.id, "param-slot",
                    f"{role} input {node.inputs[slot]!r} must be an initializer"))

        for out in node.outputs:
            if out in produced:
                violations.append(Violation(
                    node.id, "duplicate-value",
                    f"{out!r} already produced by {produced[out]}"))
            produced[out] = node.id

    for node in model.nodes:
        for name in node.inputs:
            if name not in produced:
                violations.append(Violation(node.id, "dangling-reference", f"{name!r}"))

    node_outputs = {out for node in model.nodes for out in node.outputs}
    for vi in model.outputs:
        if vi.name not in node_outputs:
            violations.append(Violation(
                None, "output-producer", f"graph output {vi.name!r} is not produced by a node"))

    referenced = {name for node in model.nodes for name in node.inputs}
    for name in model.initializers:
        if name not in referenced:
            violations.append(Violation(None, "unused-initializer", f"{name!r}"))

    if violations:
        return violations

    try:
        topological_order(model)
    except CyclicGraph as exc:
        violations.append(Violation(None, "cycle", str(exc)))
        return violations

    try:
        shapes = infer_shapes(model)
    except ShapeProblem as exc:
        violations.append(Violation(None, "shape", str(exc)))
        return violations

    for vi in model.outputs:
        if shapes.get(vi.name) != vi.shape:
            violations.append(Violation(
                None, "output-shape",
                f"{vi.name!r} declared {vi.shape}, inferred {shapes.get(vi.name)}"))
    return violations


def structural_equal(a: ModelGraph, b: ModelGraph) -> bool:
    """Equality of everything except metadata; tensors compare bit-exactly."""
    if a.name != b.name or a.layout != b.layout:
        return False
    if a.inputs != b.inputs or a.outputs != b.outputs:
        return False
    if len(a.nodes) != len(b.nodes) or any(x != y for x, y in zip(a.nodes, b.nodes)):
        return False
    if list(a.initializers) != list(b.initializers):
        return False
    return all(a.initializers[k].bit_equal(b.initializers[k]) for k in a.initializers)


# ---------------------------------------------------------------------------
# Disk format
# ---------------------------------------------------------------------------


def _value_info_to_json(vi: ValueInfo) -> dict:
    return {"name": vi.name, "dtype": vi.dtype.value, "shape": list(vi.shape)}


def _value_info_from_json(obj: dict, where: str) -> ValueInfo:
    try:
        return ValueInfo(
            name=obj["name"],
            dtype=DType.from_name(obj["dtype"]),
            shape=tuple(int(d) for d in obj["shape"]),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaViolation(where, f"bad value info: {exc}") from None


def _attrs_from_json(obj: dict, node_id: str) -> dict:
    attrs: dict[str, object] = {}
    for key, value in obj.items():
        if isinstance(value, list):
            attrs[key] = [int(v) for v in value]
        elif isinstance(value, (int, float, str)) and not isinstance(value, bool):
            attrs[key] = value
        else:
            raise SchemaViolation(node_id, f"attr {key!r} has unsupported JSON type")
    return attrs


def save_model(model: ModelGraph, path: str | Path) -> None:
    """Write a container directory. The encoding is canonical: identical
    graphs always serialize to identical bytes."""
    violations = validate_model(model)
    if violations:
        raise ValidationFailed(violations, context=f"refusing to save {model.name!r}")

    order = topological_order(model)
    nodes = [model.nodes[i] for i in order]

    blob = bytearray()
    init_entries = []
    for name, tensor in model.initializers.items():
        if len(blob) % BLOB_ALIGNMENT:
            blob.extend(b"\x00" * (BLOB_ALIGNMENT - len(blob) % BLOB_ALIGNMENT))
        payload = tensor.tobytes()
        init_entries.append({
            "name": name,
            "dtype": tensor.dtype.value,
            "shape": list(tensor.shape),
            "offset": len(blob),
            "byte_length": len(payload),
        })
        blob.extend(payload)

    manifest: dict[str, object] = {
        "format_version": FORMAT_VERSION,
        "name": model.name,
        "layout": model.layout,
        "inputs": [_value_info_to_json(vi) for vi in model.inputs],
        "outputs": [_value_info_to_json(vi) for vi in model.outputs],
        "nodes": [
            {
                "id": n.id,
                "op_type": n.op_type,
                "attrs": {k: (list(v) if isinstance(v, (list, tuple)) else v)
                          for k, v in n.attrs.items()},
                "inputs": list(n.inputs),
                "outputs": list(n.outputs),
            }
            for n in nodes
        ],
        "initializers": init_entries,
    }
    if model.metadata:
        manifest["metadata"] = model.metadata

    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        (path / MANIFEST_NAME).write_text(
            json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        (path / BLOB_NAME).write_bytes(bytes(blob))
    except OSError as exc:
        raise IoFailure(f"cannot write container {path}: {exc}") from exc


def load_model(path: str | Path, allow_non_finite: bool = False,
               validate: bool = True) -> ModelGraph:
    """Read and fully validate a container directory.

    validate=False skips graph validation (parse errors still raise), for
    callers that want the violation list rather than an exception.
    """
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MagicMismatch(f"{path}: no {MANIFEST_NAME} (not a model container)")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MagicMismatch(f"{manifest_path}: unreadable manifest: {exc}") from exc
    if not isinstance(manifest, dict):
        raise MagicMismatch(f"{manifest_path}: manifest must be a JSON object")

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionUnsupported(f"{path}: format_version {version!r}")

    for key in ("name", "layout", "inputs", "outputs", "nodes", "initializers"):
        if key not in manifest:
            raise SchemaViolation("<manifest>", f"missing key {key!r}")

    try:
        blob = (path / BLOB_NAME).read_bytes()
    except OSError as exc:
        raise MagicMismatch(f"{path}: no readable {BLOB_NAME}: {exc}") from exc

    initializers: dict[str, TensorData] = {}
    for entry in manifest["initializers"]:
        try:
            name = entry["name"]
            dtype = DType.from_name(entry["dtype"])
            shape = tuple(int(d) for d in entry["shape"])
            offset = int(entry["offset"])
            byte_length = int(entry["byte_length"])
        except (KeyError, TypeError) as exc:
            raise SchemaViolation("<manifest>", f"bad initializer entry: {exc}") from None
        count = math.prod(shape) if shape else 1
        if byte_length != count * dtype.itemsize:
            raise SchemaViolation(
                name, f"byte_length {byte_length} != {count} x {dtype.itemsize}")
        if offset < 0 or offset + byte_length > len(blob):
            raise BlobOutOfBounds(
                f"{name!r}: bytes [{offset}, {offset + byte_length}) "
                f"exceed blob of {len(blob)} bytes")
        arr = np.frombuffer(blob, dtype=dtype.np_dtype, count=count, offset=offset)
        tensor = TensorData(dtype=dtype, shape=shape, array=arr.reshape(shape).copy())
        if not allow_non_finite and not tensor.is_finite():
            raise NonFiniteTensor(f"initializer {name!r} holds non-finite values")
        initializers[name] = tensor

    nodes = []
    for obj in manifest["nodes"]:
        try:
            nodes.append(NodeSpec(
                id=obj["id"],
                op_type=obj["op_type"],
                attrs=_attrs_from_json(obj.get("attrs", {}), obj["id"]),
                inputs=tuple(obj["inputs"]),
                outputs=tuple(obj["outputs"]),
            ))
        except (KeyError, TypeError) as exc:
            raise SchemaViolation("<manifest>", f"bad node entry: {exc}") from None

    metadata = manifest.get("metadata", {})
    if not isinstance(metadata, dict):
        raise SchemaViolation("<manifest>", "metadata must be a JSON object")

    model = ModelGraph(
        name=manifest["name"],
        inputs=tuple(_value_info_from_json(o, "<inputs>") for o in manifest["inputs"]),
        outputs=tuple(_value_info_from_json(o, "<outputs>") for o in manifest["outputs"]),
        nodes=tuple(nodes),
        initializers=initializers,
        layout=manifest["layout"],
        metadata=metadata,
    )

    if validate:
        violations = validate_model(model)
        if violations:
            raise _violation_error(violations)
    return model


def _violation_error(violations: list[Violation]) -> Exception:
    for v in violations:
        if v.rule == "cycle":
            return CyclicGraph(v.detail)
    for v in violations:
        if v.rule == "dangling-reference":
            return DanglingReference(v.detail.strip("'"))
    v = violations[0]
    return SchemaViolation(v.node_id or "<graph>", f"{v.rule}: {v.detail}")


def load_chain(path: str | Path) -> ConversionChain:
    """Read a ``chain.json`` stage list: ``{"stages": [{"label", "path"}]}``.

    Stage paths are resolved relative to the chain file's directory.
    """
    path = Path(path)
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"cannot read chain file {path}: {exc}") from exc
    stages = []
    for entry in spec.get("stages", []):
        model = load_model(path.parent / entry["path"])
        stages.append((entry["label"], model))
    return ConversionChain(stages=tuple(stages))


def chain_from_paths(paths: list[str | Path], labels: list[str] | None = None) -> ConversionChain:
    models = [load_model(p) for p in paths]
    if labels is None:
        labels = [Path(p).name.removesuffix(".nmif") for p in paths]
    if len(labels) != len(models):
        raise ValueError("label count does not match stage count")
    return ConversionChain(stages=tuple(zip(labels, models)))


def with_metadata(model: ModelGraph, **updates) -> ModelGraph:
    merged = dict(model.metadata)
    merged.update(updates)
    return replace(model, metadata=merged)
