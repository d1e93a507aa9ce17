"""Differential inference over an input corpus.

Runs two or more models on every tensor in a corpus directory, compares
top-1 labels to get a discrepancy rate, and ranks the disagreeing inputs
by Kendall's tau over their top-k lists so the worst disagreements are
triaged first. Inference may fan out over threads; aggregation is a
deterministic fold ordered by input id regardless of completion order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorpusEmpty, DegenerateRanking, InputShapeMismatch, NoDiscrepancies, ShapeMismatch
from .interpreter import DEFAULT_K, execute
from .layout import canonicalize_layout
from .nmif import ModelGraph
from .tensors import TensorData, read_nt

DEFAULT_TRIAGE_N = 5


@dataclass(frozen=True)
class LabelRecord:
    input_id: str
    labels: tuple[tuple[int, ...], ...]  # one top-k list per model


@dataclass(frozen=True)
class DiscrepancyReport:
    total_inputs: int
    discrepant_inputs: int
    rate: float
    per_input_tau: dict[str, float | None]  # None = degenerate (undefined) tau
    triage: tuple[str, ...]  # discrepant ids, most-disagreeing first


def load_corpus(corpus_dir: str | Path) -> list[tuple[str, TensorData]]:
    """All `.nt` tensors in a directory, sorted by file stem."""
    corpus_dir = Path(corpus_dir)
    files = sorted(corpus_dir.glob("*.nt")) if corpus_dir.is_dir() else []
    if not files:
        raise CorpusEmpty(f"no .nt inputs in {corpus_dir}")
    return [(f.stem, read_nt(f)) for f in files]


def run_corpus(models: list[ModelGraph], corpus: str | Path, k: int = DEFAULT_K,
               threads: int = 1) -> list[LabelRecord]:
    """One LabelRecord per corpus input, ordered by input id."""
    inputs = load_corpus(corpus)
    canon = [canonicalize_layout(m) for m in models]

    def label_one(item: tuple[str, TensorData]) -> LabelRecord:
        input_id, tensor = item
        lists = []
        for model in canon:
            try:
                trace = execute(model, tensor, capture=False, k=k, input_id=input_id)
            except ShapeMismatch as exc:
                raise InputShapeMismatch(input_id, str(exc)) from None
            lists.append(tuple(trace.labels()))
        return LabelRecord(input_id=input_id, labels=tuple(lists))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(label_one, inputs))
    else:
        records = [label_one(item) for item in inputs]
    return sorted(records, key=lambda r: r.input_id)


def kendall_tau(a: list[int], b: list[int]) -> float:
    """Tau-b rank correlation between two top-k label lists.

    Ranks are taken over the label union: position (1-based) when the
    label is in the list, k+1 when absent, so partially overlapping lists
    compare sensibly. Ties from shared absence are handled by the tau-b
    denominator sqrt((N - T_a)(N - T_b)). Identical lists are 1.0 by
    definition; raises DegenerateRanking when all ranks tie (undefined).
    """
    if len(a) != len(b):
        raise ValueError(f"rank lists differ in length: {len(a)} vs {len(b)}")
    if list(a) == list(b):
        return 1.0
    k = len(a)
    labels = sorted(set(a) | set(b))
    ra = np.array([list(a).index(x) + 1 if x in a else k + 1 for x in labels], dtype=np.float64)
    rb = np.array([list(b).index(x) + 1 if x in b else k + 1 for x in labels], dtype=np.float64)
    iu, ju = np.triu_indices(len(labels), 1)
    da = ra[iu] - ra[ju]
    db = rb[iu] - rb[ju]
    prod = da * db
    concordant = int((prod > 0).sum())
    discordant = int((prod < 0).sum())
    n_pairs = len(iu)
    tied_a = int((da == 0).sum())
    tied_b = int((db == 0).sum())
    denom = math.sqrt((n_pairs - tied_a) * (n_pairs - tied_b))
    if denom == 0.0:
        raise DegenerateRanking(f"all ranks tied over union of {labels}")
    return (concordant - discordant) / denom


def compare_labels(records: list[LabelRecord], source_idx: int = 0,
                   target_idx: int = -1) -> DiscrepancyReport:
    """Top-1 discrepancy rate plus per-input tau between two model columns.

    Tau is computed for every input, not only discrepant ones; inputs
    whose tau is undefined sort first in triage (maximal discrepancy).
    """
    per_tau: dict[str, float | None] = {}
    discrepant = []
    for rec in records:
        a = rec.labels[source_idx]
        b = rec.labels[target_idx]
        try:
            per_tau[rec.input_id] = kendall_tau(list(a), list(b))
        except DegenerateRanking:
            per_tau[rec.input_id] = None
        if a[0] != b[0]:
            discrepant.append(rec.input_id)

    def triage_key(input_id: str):
        tau = per_tau[input_id]
        return (0 if tau is None else 1, tau if tau is not None else 0.0, input_id)

    triage = tuple(sorted(discrepant, key=triage_key))
    total = len(records)
    return DiscrepancyReport(
        total_inputs=total,
        discrepant_inputs=len(discrepant),
        rate=(len(discrepant) / total) if total else 0.0,
        per_input_tau=per_tau,
        triage=triage,
    )


def select_triage_subset(report: DiscrepancyReport, n: int = DEFAULT_TRIAGE_N) -> list[str]:
    """The n most-disagreeing discrepant inputs (fewer if fewer exist)."""
    if report.discrepant_inputs == 0:
        raise NoDiscrepancies("no top-1 mismatches to triage")
    return list(report.triage[:n])


def pairwise_rates(records: list[LabelRecord], n_models: int) -> np.ndarray:
    """Discrepancy-rate matrix over all model pairs (heatmap input)."""
    rates = np.zeros((n_models, n_models), dtype=np.float64)
    for i in range(n_models):
        for j in range(n_models):
            if i == j:
                continue
            rates[i, j] = compare_labels(records, i, j).rate
    return rates
