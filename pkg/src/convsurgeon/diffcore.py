"""Static comparison of two model graphs.

Alignment comes first: converted graphs rename and reorder nodes, so node
pairs are recovered as the longest common subsequence over (op symbol,
output shape) signatures in canonical topological order. Flatten and
Reshape-to-[batch,-1] share a signature symbol because they are the same
function; a conversion swapping one for the other should align them (and
the swap then surfaces as a TypeSubstitution, not as missing nodes).

All diffs operate on layout-canonicalized graphs, so NHWC vs NCHW
differences never masquerade as faults.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .layout import canonicalize_layout
from .nmif import ModelGraph, NodeSpec, infer_shapes
from .ops import OP_SCHEMAS

ROLE_NAMES = {"weight": "Weight", "bias": "Bias", "batchnorm": "BatchNormParam"}
_BN_SLOTS = {1: "scale", 2: "shift", 3: "mean", 4: "variance"}


@dataclass(frozen=True)
class LayerAlignment:
    pairs: tuple[tuple[str, str], ...]  # (source_node_id, target_node_id), in order
    source_only: tuple[str, ...]
    target_only: tuple[str, ...]
    score: float

    def pair_position(self, source_id: str | None = None, target_id: str | None = None) -> int:
        for pos, (sid, tid) in enumerate(self.pairs):
            if sid == source_id or tid == target_id:
                return pos
        raise KeyError(source_id or target_id)


@dataclass(frozen=True)
class ParamDiffEntry:
    pair: tuple[str, str]
    tensor_role: str  # Weight | Bias | BatchNormParam
    slot: str  # weight | bias | scale | shift | mean | variance
    mean_abs_diff: float
    max_abs_diff: float


@dataclass(frozen=True)
class HyperDiffEntry:
    pair: tuple[str, str]
    attr_name: str
    source_value: object
    target_value: object


@dataclass(frozen=True)
class StructDiffEntry:
    kind: str  # TypeSubstitution | ExtraTargetNode | MissingTargetNode | ParamShapeMismatch
    location: tuple[str, ...]
    source_op: str | None = None
    target_op: str | None = None


@dataclass(frozen=True)
class DiffReport:
    source_name: str
    target_name: str
    alignment: LayerAlignment
    params: tuple[ParamDiffEntry, ...]
    hypers: tuple[HyperDiffEntry, ...]
    structure: tuple[StructDiffEntry, ...]

    @property
    def clean(self) -> bool:
        return (
            not self.hypers and not self.structure
            and all(e.mean_abs_diff == 0.0 and e.max_abs_diff == 0.0 for e in self.params)
        )


# ---------------------------------------------------------------------------
# Signatures and canonical ordering
# ---------------------------------------------------------------------------


def _flatten_like(node: NodeSpec, in_shape: tuple[int, ...], out_shape: tuple[int, ...]) -> bool:
    if node.op_type == "Flatten":
        return True
    return (node.op_type == "Reshape" and len(out_shape) == 2
            and len(in_shape) >= 1 and out_shape[0] == in_shape[0])


def node_signature(node: NodeSpec, shapes: dict[str, tuple[int, ...]]) -> tuple[str, tuple[int, ...]]:
    out_shape = shapes[node.outputs[0]]
    in_shape = shapes[node.inputs[0]] if node.inputs else ()
    symbol = "#flatten" if _flatten_like(node, in_shape, out_shape) else node.op_type
    return (symbol, out_shape)


def _alignment_order(model: ModelGraph) -> list[NodeSpec]:
    """Kahn order with ready nodes prioritized by signature, so the order
    is stable under node-id renaming and under reorderings of the node
    list that keep it topological."""
    shapes = infer_shapes(model)
    produced_by = {out: i for i, n in enumerate(model.nodes) for out in n.outputs}
    indegree = [0] * len(model.nodes)
    dependents: list[list[int]] = [[] for _ in model.nodes]
    for i, node in enumerate(model.nodes):
        for name in node.inputs:
            dep = produced_by.get(name)
            if dep is not None and dep != i:
                indegree[i] += 1
                dependents[dep].append(i)
    ready = [(node_signature(model.nodes[i], shapes), i)
             for i, d in enumerate(indegree) if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        _, i = heapq.heappop(ready)
        order.append(model.nodes[i])
        for dep in dependents[i]:
            indegree[dep] -= 1
            if indegree[dep] == 0:
                heapq.heappush(ready, (node_signature(model.nodes[dep], shapes), dep))
    return order


def _lcs_pairs(a: list, b: list) -> list[tuple[int, int]]:
    """Index pairs of one LCS, earliest-position match on ties."""
    n, m = len(a), len(b)
    # L[i][j] = LCS length of a[i:], b[j:]
    L = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                L[i][j] = L[i + 1][j + 1] + 1
            else:
                L[i][j] = max(L[i + 1][j], L[i][j + 1])
    pairs = []
    i = j = 0
    while i < n and j < m:
        if a[i] == b[j] and L[i][j] == L[i + 1][j + 1] + 1:
            pairs.append((i, j))
            i += 1
            j += 1
        elif L[i + 1][j] >= L[i][j + 1]:
            i += 1
        else:
            j += 1
    return pairs


def align_layers(source: ModelGraph, target: ModelGraph) -> LayerAlignment:
    source = canonicalize_layout(source)
    target = canonicalize_layout(target)
    s_nodes = _alignment_order(source)
    t_nodes = _alignment_order(target)
    s_shapes = infer_shapes(source)
    t_shapes = infer_shapes(target)
    s_sigs = [node_signature(n, s_shapes) for n in s_nodes]
    t_sigs = [node_signature(n, t_shapes) for n in t_nodes]
    idx_pairs = _lcs_pairs(s_sigs, t_sigs)
    matched_s = {i for i, _ in idx_pairs}
    matched_t = {j for _, j in idx_pairs}
    pairs = tuple((s_nodes[i].id, t_nodes[j].id) for i, j in idx_pairs)
    source_only = tuple(n.id for i, n in enumerate(s_nodes) if i not in matched_s)
    target_only = tuple(n.id for j, n in enumerate(t_nodes) if j not in matched_t)
    total = len(s_nodes) + len(t_nodes)
    score = (2 * len(pairs) / total) if total else 1.0
    return LayerAlignment(pairs=pairs, source_only=source_only,
                          target_only=target_only, score=score)


# ---------------------------------------------------------------------------
# Diffs
# ---------------------------------------------------------------------------


def _param_tensors(model: ModelGraph, node: NodeSpec) -> list[tuple[str, str, str]]:
    """(role, slot_name, initializer_name) for each parameter of a node."""
    schema = OP_SCHEMAS[node.op_type]
    out = []
    for slot in sorted(schema.param_slots):
        if slot >= len(node.inputs):
            continue
        role = schema.param_slots[slot]
        slot_name = _BN_SLOTS[slot] if role == "batchnorm" else role
        out.append((ROLE_NAMES[role], slot_name, node.inputs[slot]))
    return out


def diff_params(source: ModelGraph, target: ModelGraph,
                alignment: LayerAlignment) -> list[ParamDiffEntry]:
    """One entry per aligned pair per parameter tensor, mean/max of
    |source - target| accumulated in binary64. Zero entries are kept;
    report layers filter, the data does not. Shape-mismatched parameters
    are skipped here (diff_structure reports them)."""
    source = canonicalize_layout(source)
    target = canonicalize_layout(target)
    entries = []
    for sid, tid in alignment.pairs:
        s_node = source.node_by_id(sid)
        t_node = target.node_by_id(tid)
        s_params = _param_tensors(source, s_node)
        t_params = _param_tensors(target, t_node)
        for (role, slot, s_name), (_, _, t_name) in zip(s_params, t_params):
            a = source.initializers[s_name]
            b = target.initializers[t_name]
            if a.shape != b.shape or a.dtype != b.dtype:
                continue
            delta = np.abs(a.array.astype(np.float64) - b.array.astype(np.float64))
            entries.append(ParamDiffEntry(
                pair=(sid, tid), tensor_role=role, slot=slot,
                mean_abs_diff=float(delta.mean()) if delta.size else 0.0,
                max_abs_diff=float(delta.max()) if delta.size else 0.0,
            ))
    return entries


def _comparable(value) -> object:
    if isinstance(value, (list, tuple)):
        return list(value)
    return value


def diff_hypers(source: ModelGraph, target: ModelGraph,
                alignment: LayerAlignment) -> list[HyperDiffEntry]:
    """Attribute mismatches across aligned pairs, compared after layout
    canonicalization so per-axis attrs are in a common order. Attrs
    present on only one side (substituted op types) diff against None."""
    source = canonicalize_layout(source)
    target = canonicalize_layout(target)
    entries = []
    for sid, tid in alignment.pairs:
        s_attrs = source.node_by_id(sid).attrs
        t_attrs = target.node_by_id(tid).attrs
        for name in sorted(set(s_attrs) | set(t_attrs)):
            sv = _comparable(s_attrs.get(name))
            tv = _comparable(t_attrs.get(name))
            if sv != tv:
                entries.append(HyperDiffEntry(pair=(sid, tid), attr_name=name,
                                              source_value=sv, target_value=tv))
    return entries


def diff_structure(source: ModelGraph, target: ModelGraph,
                   alignment: LayerAlignment) -> list[StructDiffEntry]:
    """Classifies structural mismatches:

    * aligned pairs with different op types -> TypeSubstitution
      (Flatten vs Reshape-[batch,-1] lands here via the shared symbol);
    * unaligned source/target nodes facing each other in the same LCS gap
      with identical output shapes -> TypeSubstitution;
    * remaining unaligned nodes -> MissingTargetNode / ExtraTargetNode;
    * aligned same-op pairs whose parameter shapes disagree ->
      ParamShapeMismatch (numeric mean over mismatched shapes is
      undefined, so diff_params skips them and they surface here).
    """
    source = canonicalize_layout(source)
    target = canonicalize_layout(target)
    s_shapes = infer_shapes(source)
    t_shapes = infer_shapes(target)
    entries = []

    for sid, tid in alignment.pairs:
        s_node = source.node_by_id(sid)
        t_node = target.node_by_id(tid)
        if s_node.op_type != t_node.op_type:
            entries.append(StructDiffEntry(
                kind="TypeSubstitution", location=(sid, tid),
                source_op=s_node.op_type, target_op=t_node.op_type))
            continue
        s_params = _param_tensors(source, s_node)
        t_params = _param_tensors(target, t_node)
        for (role, slot, s_name), (_, _, t_name) in zip(s_params, t_params):
            a = source.initializers[s_name]
            b = target.initializers[t_name]
            if a.shape != b.shape or a.dtype != b.dtype:
                entries.append(StructDiffEntry(
                    kind="ParamShapeMismatch", location=(sid, tid),
                    source_op=s_node.op_type, target_op=t_node.op_type))
                break

    # gap index = how many aligned nodes precede the unmatched node
    s_order = [n.id for n in _alignment_order(source)]
    t_order = [n.id for n in _alignment_order(target)]
    s_pair_pos = sorted(s_order.index(sid) for sid, _ in alignment.pairs)
    t_pair_pos = sorted(t_order.index(tid) for _, tid in alignment.pairs)

    def gap_of(pos: int, pair_positions: list[int]) -> int:
        return sum(1 for p in pair_positions if p < pos)

    s_gaps: dict[int, list[str]] = {}
    for sid in alignment.source_only:
        s_gaps.setdefault(gap_of(s_order.index(sid), s_pair_pos), []).append(sid)
    t_gaps: dict[int, list[str]] = {}
    for tid in alignment.target_only:
        t_gaps.setdefault(gap_of(t_order.index(tid), t_pair_pos), []).append(tid)

    missing: list[str] = []
    extra: list[str] = []
    for gap in sorted(set(s_gaps) | set(t_gaps)):
        s_run = s_gaps.get(gap, [])
        t_run = t_gaps.get(gap, [])
        used_t: set[str] = set()
        for sid in s_run:
            match = next(
                (tid for tid in t_run
                 if tid not in used_t
                 and t_shapes[target.node_by_id(tid).outputs[0]]
                 == s_shapes[source.node_by_id(sid).outputs[0]]),
                None)
            if match is not None:
                used_t.add(match)
                entries.append(StructDiffEntry(
                    kind="TypeSubstitution", location=(sid, match),
                    source_op=source.node_by_id(sid).op_type,
                    target_op=target.node_by_id(match).op_type))
            else:
                missing.append(sid)
        extra.extend(tid for tid in t_run if tid not in used_t)

    for sid in missing:
        entries.append(StructDiffEntry(
            kind="MissingTargetNode", location=(sid,),
            source_op=source.node_by_id(sid).op_type))
    for tid in extra:
        entries.append(StructDiffEntry(
            kind="ExtraTargetNode", location=(tid,),
            target_op=target.node_by_id(tid).op_type))
    return entries


def diff_models(source: ModelGraph, target: ModelGraph) -> DiffReport:
    """Alignment plus all three static diffs in one report."""
    alignment = align_layers(source, target)
    return DiffReport(
        source_name=source.name,
        target_name=target.name,
        alignment=alignment,
        params=tuple(diff_params(source, target, alignment)),
        hypers=tuple(diff_hypers(source, target, alignment)),
        structure=tuple(diff_structure(source, target, alignment)),
    )
