"""End-to-end fault localization over a conversion chain.

The pipeline: compare first vs last stage over the corpus; if they
disagree, bisect the chain on the worst-disagreeing (triage) inputs to
find the edge where top-1 labels first flip, statically diff the two
models on that edge, then trace per-layer activations on the triage
inputs plus one agreeing control input to find the earliest aligned pair
whose outputs diverge. Suspects are ranked by evidence class (parameter
diffs, then hyperparameter diffs, then structural edits near the
divergence) and graph position, earliest first, because errors propagate
forward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import DiffReport, LayerAlignment, diff_models
from .differential import (
    DEFAULT_TRIAGE_N,
    DiscrepancyReport,
    compare_labels,
    load_corpus,
    run_corpus,
    select_triage_subset,
)
from .errors import ConvSurgeonError, StageExecutionFailed
from .interpreter import DEFAULT_K, execute
from .layout import canonicalize_layout
from .nmif import ConversionChain, ModelGraph
from .tensors import TensorData

DEFAULT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class LocalizeConfig:
    k: int = DEFAULT_K
    triage_n: int = DEFAULT_TRIAGE_N
    tolerance: float = DEFAULT_TOLERANCE
    threads: int = 1


@dataclass(frozen=True)
class StageVerdict:
    stage_labels: tuple[str, ...]
    per_input_labels: dict[str, tuple[int, ...]]  # input_id -> top-1 at each stage
    faulty_edges: tuple[tuple[int, int], ...]  # ordered by chain position
    support: dict[tuple[int, int], tuple[str, ...]]  # edge -> supporting input ids


@dataclass(frozen=True)
class LayerDivergence:
    input_id: str
    is_control: bool
    series: tuple[float | None, ...]  # mean |a-b| per aligned pair; None = shape mismatch
    structural_pairs: tuple[int, ...]  # positions excluded from the numeric series
    first_divergent_pair: tuple[int, str, str] | None  # (position, source_id, target_id)
    max_divergent_pair: tuple[int, str, str] | None


@dataclass(frozen=True)
class Suspect:
    rank: int
    kind: str  # param | hyper | structure
    pair_position: int | None
    entry: object  # the ParamDiffEntry / HyperDiffEntry / StructDiffEntry cited
    evidence: str


@dataclass(frozen=True)
class LocalizationReport:
    discrepancy: DiscrepancyReport
    verdict: StageVerdict | None
    implicated_edge: tuple[int, int] | None
    edge_labels: tuple[str, str] | None
    diff: DiffReport | None
    divergences: tuple[LayerDivergence, ...]
    control_input: str | None
    suspects: tuple[Suspect, ...]

    @property
    def clean(self) -> bool:
        return self.discrepancy.rate == 0.0


def bisect_stages(chain: ConversionChain,
                  triage_inputs: list[tuple[str, TensorData]]) -> StageVerdict:
    """Run every stage on every triage input; an edge (i, i+1) is faulty
    for an input iff the top-1 label changes across it."""
    labels = chain.labels
    models = [canonicalize_layout(m) for m in chain.models]
    per_input: dict[str, tuple[int, ...]] = {}
    support: dict[tuple[int, int], list[str]] = {}
    for input_id, tensor in triage_inputs:
        tops = []
        for label, model in zip(labels, models):
            try:
                trace = execute(model, tensor, capture=False, k=1, input_id=input_id)
            except ConvSurgeonError as exc:
                node_id = getattr(exc, "node_id", None) or "<graph>"
                raise StageExecutionFailed(label, node_id, str(exc)) from exc
            tops.append(trace.top1)
        per_input[input_id] = tuple(tops)
        for i in range(len(tops) - 1):
            if tops[i + 1] != tops[i]:
                support.setdefault((i, i + 1), []).append(input_id)
    edges = tuple(sorted(support))
    return StageVerdict(
        stage_labels=tuple(labels),
        per_input_labels=per_input,
        faulty_edges=edges,
        support={edge: tuple(sorted(ids)) for edge, ids in support.items()},
    )


def trace_divergence(source: ModelGraph, target: ModelGraph, alignment: LayerAlignment,
                     input: tuple[str, TensorData], tolerance: float = DEFAULT_TOLERANCE,
                     is_control: bool = False) -> LayerDivergence:
    """Mean absolute activation difference per aligned pair, binary64
    accumulation, plus the first and largest pair exceeding tolerance.
    Pairs whose activations disagree in shape are flagged structurally
    and excluded from the numeric series."""
    input_id, tensor = input
    s_trace = execute(canonicalize_layout(source), tensor, capture=True, input_id=input_id)
    t_trace = execute(canonicalize_layout(target), tensor, capture=True, input_id=input_id)
    s_out = {node_id: t for node_id, _, t in s_trace.entries}
    t_out = {node_id: t for node_id, _, t in t_trace.entries}

    series: list[float | None] = []
    structural: list[int] = []
    first = None
    biggest = None
    for pos, (sid, tid) in enumerate(alignment.pairs):
        a = s_out[sid]
        b = t_out[tid]
        if a.shape != b.shape:
            series.append(None)
            structural.append(pos)
            continue
        diff = float(np.abs(a.array.astype(np.float64) - b.array.astype(np.float64)).mean())
        series.append(diff)
        if diff > tolerance:
            if first is None:
                first = (pos, sid, tid)
            if biggest is None or diff > series[biggest[0]]:
                biggest = (pos, sid, tid)
    return LayerDivergence(
        input_id=input_id,
        is_control=is_control,
        series=tuple(series),
        structural_pairs=tuple(structural),
        first_divergent_pair=first,
        max_divergent_pair=biggest,
    )


def _neighborhood(model: ModelGraph, node_id: str) -> set[str]:
    """The node plus its direct producers and consumers (distance <= 1)."""
    node = model.node_by_id(node_id)
    near = {node_id}
    for name in node.inputs:
        producer = model.producer_of(name)
        if producer is not None:
            near.add(producer.id)
    for out in node.outputs:
        for consumer, _ in model.consumers_of(out):
            near.add(consumer.id)
    return near


def rank_suspects(diff: DiffReport, divergences: list[LayerDivergence],
                  source: ModelGraph, target: ModelGraph) -> tuple[Suspect, ...]:
    """Evidence-ranked suspect list.

    Class 1: nonzero parameter diffs at or before the first divergent
    pair. Class 2: hyperparameter diffs likewise. Class 3: structural
    entries within graph distance 1 of the first divergent pair. Within
    a class, earliest pair position wins, then larger magnitude; errors
    propagate forward, so the earliest plausible cause outranks the
    largest one.
    """
    alignment = diff.alignment
    firsts = [d.first_divergent_pair[0] for d in divergences
              if not d.is_control and d.first_divergent_pair is not None]
    anchor_pos = min(firsts) if firsts else max(len(alignment.pairs) - 1, 0)
    if not alignment.pairs:
        return ()
    anchor_sid, anchor_tid = alignment.pairs[anchor_pos]
    source = canonicalize_layout(source)
    target = canonicalize_layout(target)
    near_source = _neighborhood(source, anchor_sid)
    near_target = _neighborhood(target, anchor_tid)

    candidates: list[tuple[tuple, Suspect]] = []
    for entry in diff.params:
        if entry.mean_abs_diff == 0.0:
            continue
        pos = alignment.pair_position(source_id=entry.pair[0])
        if pos > anchor_pos:
            continue
        evidence = (f"mean |delta| {entry.mean_abs_diff:.3e} in {entry.pair[1]} "
                    f"{entry.slot} (pair {pos})")
        candidates.append(((1, pos, -entry.mean_abs_diff, entry.pair[1], entry.slot),
                           Suspect(0, "param", pos, entry, evidence)))
    for entry in diff.hypers:
        pos = alignment.pair_position(source_id=entry.pair[0])
        if pos > anchor_pos:
            continue
        evidence = (f"attr {entry.attr_name} differs at {entry.pair[1]}: "
                    f"{entry.source_value!r} vs {entry.target_value!r} (pair {pos})")
        candidates.append(((2, pos, 0.0, entry.pair[1], entry.attr_name),
                           Suspect(0, "hyper", pos, entry, evidence)))
    for entry in diff.structure:
        involved = set(entry.location)
        if not (involved & near_source or involved & near_target):
            continue
        pos = None
        if entry.kind in ("TypeSubstitution", "ParamShapeMismatch") and len(entry.location) == 2:
            try:
                pos = alignment.pair_position(source_id=entry.location[0])
            except KeyError:
                pos = None
        ops = "/".join(op for op in (entry.source_op, entry.target_op) if op)
        evidence = f"{entry.kind} ({ops}) at {','.join(entry.location)}"
        sort_pos = pos if pos is not None else anchor_pos
        candidates.append(((3, sort_pos, 0.0, entry.location, entry.kind),
                           Suspect(0, "structure", pos, entry, evidence)))

    candidates.sort(key=lambda item: _sortable(item[0]))
    return tuple(Suspect(rank=i + 1, kind=s.kind, pair_position=s.pair_position,
                         entry=s.entry, evidence=s.evidence)
                 for i, (_, s) in enumerate(candidates))


def _sortable(key: tuple) -> tuple:
    return tuple(str(part) if isinstance(part, (tuple, list)) else part for part in key)


def localize(chain: ConversionChain, corpus: str, config: LocalizeConfig = LocalizeConfig()) -> LocalizationReport:
    """The full pipeline. Deterministic given (chain, corpus, config)."""
    records = run_corpus([chain.models[0], chain.models[-1]], corpus,
                         k=config.k, threads=config.threads)
    discrepancy = compare_labels(records, 0, -1)
    if discrepancy.rate == 0.0:
        return LocalizationReport(
            discrepancy=discrepancy, verdict=None, implicated_edge=None,
            edge_labels=None, diff=None, divergences=(), control_input=None,
            suspects=())

    triage_ids = select_triage_subset(discrepancy, n=config.triage_n)
    tensors = dict(load_corpus(corpus))
    triage_inputs = [(input_id, tensors[input_id]) for input_id in triage_ids]
    verdict = bisect_stages(chain, triage_inputs)
    edge = verdict.faulty_edges[0]

    edge_source = chain.models[edge[0]]
    edge_target = chain.models[edge[1]]
    diff = diff_models(edge_source, edge_target)

    agreeing = sorted(rec.input_id for rec in records
                      if rec.labels[0][0] == rec.labels[-1][0])
    control = agreeing[0] if agreeing else None

    traced = list(triage_inputs)
    if control is not None:
        traced.append((control, tensors[control]))
    divergences = tuple(
        trace_divergence(edge_source, edge_target, diff.alignment,
                         (input_id, tensor), tolerance=config.tolerance,
                         is_control=(input_id == control))
        for input_id, tensor in traced)

    suspects = rank_suspects(diff, list(divergences), edge_source, edge_target)
    return LocalizationReport(
        discrepancy=discrepancy,
        verdict=verdict,
        implicated_edge=edge,
        edge_labels=(chain.labels[edge[0]], chain.labels[edge[1]]),
        diff=diff,
        divergences=divergences,
        control_input=control,
        suspects=suspects,
    )
