"""Repair: replayable, invertible graph edits plus verified application.

Actions embed everything they need (replacement tensors, attr values,
node specs), so a plan can be applied to a fresh copy of the target
without the source model in hand, and every action has an exact inverse.
Application is non-destructive: each action yields a new validated graph
and appends to an edit log in the graph's metadata.

The session policy is greedy: actions run in suspect-rank order, the
discrepancy rate is re-measured after each, regressions are reverted,
and everything else is kept (a rate-neutral edit can still move outputs
toward bitwise equality). The full trajectory is reported.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .diffcore import DiffReport, ParamDiffEntry, HyperDiffEntry, StructDiffEntry
from .differential import compare_labels, run_corpus
from .errors import UnrepairableSuspect, ValidationFailed
from .interpreter import DEFAULT_K
from .localize import LocalizationReport, Suspect
from .nmif import ModelGraph, NodeSpec, validate_model
from .ops import OP_SCHEMAS
from .tensors import TensorData

BN_SLOT_NAMES = {1: "scale", 2: "shift", 3: "mean", 4: "variance"}


@dataclass(frozen=True)
class ReplaceParams:
    node_id: str  # in the target graph
    values: dict[str, TensorData]  # slot name (weight/bias/scale/...) -> tensor
    provenance: str = ""

    kind = "ReplaceParams"


@dataclass(frozen=True)
class ReplaceHyper:
    node_id: str
    attr_name: str
    value: object
    provenance: str = ""

    kind = "ReplaceHyper"


@dataclass(frozen=True)
class SubstituteNode:
    node_id: str
    replacement: NodeSpec  # same inputs/outputs wiring, different op/attrs
    provenance: str = ""

    kind = "SubstituteNode"


@dataclass(frozen=True)
class RemoveNode:
    node_id: str
    provenance: str = ""

    kind = "RemoveNode"


@dataclass(frozen=True)
class InsertNode:
    """Inverse of RemoveNode; not produced by planning, only by invert()."""

    node: NodeSpec
    initializers: dict[str, TensorData]
    rewired: tuple[tuple[str, int], ...]  # (consumer node id, input slot)
    insert_index: int
    provenance: str = ""

    kind = "InsertNode"


RepairAction = ReplaceParams | ReplaceHyper | SubstituteNode | RemoveNode | InsertNode


@dataclass(frozen=True)
class RepairOutcome:
    actions: tuple[RepairAction, ...]
    before_rate: float
    after_rate: float
    verdict: str  # Resolved | Improved | NoEffect | Regressed


def _verdict(before: float, after: float) -> str:
    if after == 0.0:
        return "Resolved"
    if after < before:
        return "Improved"
    if after > before:
        return "Regressed"
    return "NoEffect"


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------


def _param_slot_index(op_type: str, slot_name: str) -> int:
    schema = OP_SCHEMAS[op_type]
    for slot, role in schema.param_slots.items():
        name = BN_SLOT_NAMES[slot] if role == "batchnorm" else role
        if name == slot_name:
            return slot
    raise KeyError(f"{op_type} has no parameter slot {slot_name!r}")


def _source_param(source: ModelGraph, node_id: str, slot_name: str) -> TensorData:
    node = source.node_by_id(node_id)
    return source.initializers[node.inputs[_param_slot_index(node.op_type, slot_name)]]


def _plan_structural(entry: StructDiffEntry, source: ModelGraph,
                     target: ModelGraph, provenance: str) -> RepairAction:
    if entry.kind == "TypeSubstitution":
        sid, tid = entry.location
        s_node = source.node_by_id(sid)
        t_node = target.node_by_id(tid)
        if OP_SCHEMAS[s_node.op_type].param_slots or OP_SCHEMAS[t_node.op_type].param_slots:
            raise UnrepairableSuspect(
                f"substituting {t_node.op_type} -> {s_node.op_type} would need "
                "parameter tensors; beyond the edit vocabulary")
        if len(s_node.inputs) != len(t_node.inputs):
            raise UnrepairableSuspect(
                f"{s_node.op_type} and {t_node.op_type} disagree on arity")
        replacement = NodeSpec(id=t_node.id, op_type=s_node.op_type,
                               attrs=dict(s_node.attrs), inputs=t_node.inputs,
                               outputs=t_node.outputs)
        return SubstituteNode(node_id=tid, replacement=replacement, provenance=provenance)
    if entry.kind == "ExtraTargetNode":
        (tid,) = entry.location
        node = target.node_by_id(tid)
        data_inputs = [n for n in node.inputs if n not in target.initializers]
        graph_outputs = {vi.name for vi in target.outputs}
        if len(data_inputs) != 1 or len(node.outputs) != 1:
            raise UnrepairableSuspect(
                f"cannot splice out {tid}: needs one data input and one output")
        if node.outputs[0] in graph_outputs:
            raise UnrepairableSuspect(f"{tid} produces a graph output; removal would rename it")
        return RemoveNode(node_id=tid, provenance=provenance)
    if entry.kind == "MissingTargetNode":
        raise UnrepairableSuspect(
            f"node {entry.location[0]} exists only in the source; "
            "inserting new computation is beyond the edit vocabulary")
    raise UnrepairableSuspect(
        f"{entry.kind} at {entry.location}: shape-changing parameter "
        "replacement is beyond the edit vocabulary")


def plan_repairs(report: LocalizationReport, source: ModelGraph,
                 target: ModelGraph) -> list[RepairAction]:
    """Map ranked suspects to concrete actions, in rank order.

    Hyperparameter entries between substituted op types carry a None side
    and are subsumed by the SubstituteNode action for that pair, so they
    plan to nothing. Raises UnrepairableSuspect for structural findings
    outside the edit vocabulary.
    """
    return _plan(list(report.suspects), source, target)


def plan_from_diff(diff: DiffReport, source: ModelGraph,
                   target: ModelGraph) -> list[RepairAction]:
    """Plan directly from a static diff (no divergence anchor). Used when
    the corpus shows no discrepancy but the graphs still differ, e.g. a
    benign Flatten/Reshape substitution worth normalizing away."""
    suspects = []
    for entry in diff.params:
        if entry.mean_abs_diff > 0.0:
            suspects.append(Suspect(0, "param", None, entry, "static param diff"))
    for entry in diff.hypers:
        suspects.append(Suspect(0, "hyper", None, entry, "static hyper diff"))
    for entry in diff.structure:
        suspects.append(Suspect(0, "structure", None, entry, "static structural diff"))
    return _plan(suspects, source, target)


def _plan(suspects: list[Suspect], source: ModelGraph,
          target: ModelGraph) -> list[RepairAction]:
    structural_nodes = {
        node_id for s in suspects if s.kind == "structure"
        for node_id in s.entry.location
    }
    seen: set[tuple] = set()
    planned: list[RepairAction] = []
    for s in suspects:
        entry = s.entry
        if s.kind == "param":
            assert isinstance(entry, ParamDiffEntry)
            sid, tid = entry.pair
            if tid in structural_nodes or ("p", tid, entry.slot) in seen:
                continue
            seen.add(("p", tid, entry.slot))
            planned.append(ReplaceParams(
                node_id=tid, values={entry.slot: _source_param(source, sid, entry.slot)},
                provenance=s.evidence))
        elif s.kind == "hyper":
            assert isinstance(entry, HyperDiffEntry)
            sid, tid = entry.pair
            if entry.source_value is None or entry.target_value is None:
                continue  # op substitution artifact; the structural action covers it
            if tid in structural_nodes or ("h", tid, entry.attr_name) in seen:
                continue
            seen.add(("h", tid, entry.attr_name))
            planned.append(ReplaceHyper(
                node_id=tid, attr_name=entry.attr_name, value=entry.source_value,
                provenance=s.evidence))
        elif s.kind == "structure":
            assert isinstance(entry, StructDiffEntry)
            planned.append(_plan_structural(entry, source, target, provenance=s.evidence))
    return planned


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------


def _log_entry(action: RepairAction) -> dict:
    entry = {"kind": action.kind}
    if isinstance(action, InsertNode):
        entry["node"] = action.node.id
    else:
        entry["node"] = action.node_id
    if isinstance(action, ReplaceParams):
        entry["slots"] = sorted(action.values)
    elif isinstance(action, ReplaceHyper):
        entry["attr"] = action.attr_name
        entry["value"] = action.value if not isinstance(action.value, tuple) else list(action.value)
    elif isinstance(action, SubstituteNode):
        entry["op_type"] = action.replacement.op_type
    if action.provenance:
        entry["provenance"] = action.provenance
    return entry


def _apply_one(graph: ModelGraph, action: RepairAction) -> ModelGraph:
    if isinstance(action, ReplaceParams):
        node = graph.node_by_id(action.node_id)
        inits = dict(graph.initializers)
        for slot_name, tensor in action.values.items():
            name = node.inputs[_param_slot_index(node.op_type, slot_name)]
            inits[name] = tensor
        return replace(graph, initializers=inits)

    if isinstance(action, ReplaceHyper):
        node = graph.node_by_id(action.node_id)
        attrs = dict(node.attrs)
        attrs[action.attr_name] = action.value
        new_node = replace(node, attrs=attrs)
        nodes = tuple(new_node if n.id == action.node_id else n for n in graph.nodes)
        return replace(graph, nodes=nodes)

    if isinstance(action, SubstituteNode):
        original = graph.node_by_id(action.node_id)
        if action.replacement.outputs != original.outputs:
            raise ValidationFailed([], context="substitution must preserve output names")
        nodes = tuple(action.replacement if n.id == action.node_id else n
                      for n in graph.nodes)
        return replace(graph, nodes=nodes)

    if isinstance(action, RemoveNode):
        node = graph.node_by_id(action.node_id)
        data_inputs = [n for n in node.inputs if n not in graph.initializers]
        if len(data_inputs) != 1 or len(node.outputs) != 1:
            raise ValidationFailed([], context=f"cannot splice out {action.node_id}")
        feed = data_inputs[0]
        removed_out = node.outputs[0]
        nodes = []
        for n in graph.nodes:
            if n.id == action.node_id:
                continue
            if removed_out in n.inputs:
                n = replace(n, inputs=tuple(feed if name == removed_out else name
                                            for name in n.inputs))
            nodes.append(n)
        still_used = {name for n in nodes for name in n.inputs}
        inits = {name: t for name, t in graph.initializers.items() if name in still_used}
        return replace(graph, nodes=tuple(nodes), initializers=inits)

    if isinstance(action, InsertNode):
        nodes = list(graph.nodes)
        nodes.insert(min(action.insert_index, len(nodes)), action.node)
        out_name = action.node.outputs[0]
        new_nodes = []
        for n in nodes:
            for (cid, slot) in action.rewired:
                if n.id == cid:
                    ins = list(n.inputs)
                    ins[slot] = out_name
                    n = replace(n, inputs=tuple(ins))
            new_nodes.append(n)
        inits = dict(graph.initializers)
        inits.update(action.initializers)
        return replace(graph, nodes=tuple(new_nodes), initializers=inits)

    raise TypeError(f"unknown action {action!r}")


def apply(target: ModelGraph, actions: list[RepairAction]) -> ModelGraph:
    """Apply actions in order; validate after each. The original graph is
    never touched; returns a new graph with the edit log appended to its
    metadata. No partial result: any validation failure raises."""
    graph = target
    log = list(graph.metadata.get("repair_log", []))
    for i, action in enumerate(actions):
        graph = _apply_one(graph, action)
        violations = validate_model(graph)
        if violations:
            raise ValidationFailed(
                violations,
                context=f"after action {i} ({action.kind} on {_log_entry(action)['node']})")
        log.append(_log_entry(action))
    metadata = dict(graph.metadata)
    metadata["repair_log"] = log
    return replace(graph, metadata=metadata)


def invert(action: RepairAction, graph_before: ModelGraph) -> RepairAction:
    """The exact inverse of an action against the graph it was applied to."""
    if isinstance(action, ReplaceParams):
        node = graph_before.node_by_id(action.node_id)
        old = {}
        for slot_name in action.values:
            name = node.inputs[_param_slot_index(node.op_type, slot_name)]
            old[slot_name] = graph_before.initializers[name]
        return ReplaceParams(node_id=action.node_id, values=old,
                             provenance=f"invert: {action.provenance}")
    if isinstance(action, ReplaceHyper):
        node = graph_before.node_by_id(action.node_id)
        return ReplaceHyper(node_id=action.node_id, attr_name=action.attr_name,
                            value=node.attrs[action.attr_name],
                            provenance=f"invert: {action.provenance}")
    if isinstance(action, SubstituteNode):
        return SubstituteNode(node_id=action.node_id,
                              replacement=graph_before.node_by_id(action.node_id),
                              provenance=f"invert: {action.provenance}")
    if isinstance(action, RemoveNode):
        node = graph_before.node_by_id(action.node_id)
        index = next(i for i, n in enumerate(graph_before.nodes) if n.id == node.id)
        inits = {name: graph_before.initializers[name]
                 for name in node.inputs if name in graph_before.initializers}
        rewired = tuple((consumer.id, slot)
                        for consumer, slot in graph_before.consumers_of(node.outputs[0]))
        return InsertNode(node=node, initializers=inits, rewired=rewired,
                          insert_index=index, provenance=f"invert: {action.provenance}")
    if isinstance(action, InsertNode):
        return RemoveNode(node_id=action.node.id,
                          provenance=f"invert: {action.provenance}")
    raise TypeError(f"unknown action {action!r}")


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def conversion_rate(source: ModelGraph, target: ModelGraph, corpus: str,
                    k: int = DEFAULT_K, threads: int = 1) -> float:
    records = run_corpus([source, target], corpus, k=k, threads=threads)
    return compare_labels(records, 0, -1).rate


def verify(source: ModelGraph, original_target: ModelGraph, repaired: ModelGraph,
           corpus: str, actions: tuple[RepairAction, ...] = (), k: int = DEFAULT_K,
           threads: int = 1) -> RepairOutcome:
    """Discrepancy rate before and after repair, with the verdict."""
    before = conversion_rate(source, original_target, corpus, k=k, threads=threads)
    after = conversion_rate(source, repaired, corpus, k=k, threads=threads)
    return RepairOutcome(actions=tuple(actions), before_rate=before,
                         after_rate=after, verdict=_verdict(before, after))


@dataclass(frozen=True)
class SessionStep:
    action: RepairAction
    rate_after: float
    kept: bool


@dataclass(frozen=True)
class RepairSession:
    repaired: ModelGraph
    outcome: RepairOutcome
    trajectory: tuple[SessionStep, ...]


def repair_session(source: ModelGraph, target: ModelGraph, corpus: str,
                   actions: list[RepairAction], k: int = DEFAULT_K,
                   threads: int = 1) -> RepairSession:
    """Greedy application in rank order: measure after each action, keep
    anything that does not regress the rate, revert regressions."""
    before = conversion_rate(source, target, corpus, k=k, threads=threads)
    current = target
    current_rate = before
    kept: list[RepairAction] = []
    steps: list[SessionStep] = []
    for action in actions:
        candidate = apply(current, [action])
        rate = conversion_rate(source, candidate, corpus, k=k, threads=threads)
        if rate > current_rate:
            steps.append(SessionStep(action=action, rate_after=rate, kept=False))
            continue
        current = candidate
        current_rate = rate
        kept.append(action)
        steps.append(SessionStep(action=action, rate_after=rate, kept=True))
    outcome = RepairOutcome(actions=tuple(kept), before_rate=before,
                            after_rate=current_rate, verdict=_verdict(before, current_rate))
    return RepairSession(repaired=current, outcome=outcome, trajectory=tuple(steps))
