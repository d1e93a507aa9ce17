"""Report serialization: fixed-schema JSON and CSV artifacts.

Every writer produces deterministic bytes: dict keys are inserted in a
fixed order, floats are serialized by json's repr rules, CSV uses "\\n"
line endings, and JSON files end with a trailing newline.

Artifact schemas
----------------
diff.json        {source, target, alignment{score, pairs, source_only,
                  target_only}, params[], hypers[], structure[], clean}
diff.csv         section, position, source_id, target_id, name,
                 value_a, value_b (params: mean/max abs diff; hypers:
                 source/target value; structure: source/target op)
discrepancy.json {total_inputs, discrepant_inputs, rate, triage[],
                  per_input[{input_id, discrepant, tau}]}
discrepancy.csv  input_id, discrepant, tau ("" when undefined)
localization.json{discrepancy, verdict, implicated_edge, edge_labels,
                  diff, control_input, divergences[], suspects[], clean}
layers.csv       position, source_id, target_id, one column per traced
                 input (blank where a pair has no numeric entry), and a
                 parameters column (largest parameter-tensor mean |delta|
                 at that pair; blank when the pair holds no parameters)
repair_log.json  {before_rate, after_rate, verdict, trajectory[],
                  applied[]} where each step extends the action record
                 with rate_after and kept
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .diffcore import (DiffReport, HyperDiffEntry, ParamDiffEntry,
                       StructDiffEntry)
from .differential import DiscrepancyReport
from .localize import LocalizationReport
from .repair import RepairSession, _log_entry


def _dump_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    return path


def _open_csv(path: Path):
    return open(path, "w", newline="", encoding="utf-8")


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    return value


# ---------------------------------------------------------------------------
# Static diff
# ---------------------------------------------------------------------------


def _param_entry_dict(entry: ParamDiffEntry, report: DiffReport) -> dict:
    return {
        "pair": list(entry.pair),
        "position": report.alignment.pair_position(source_id=entry.pair[0]),
        "role": entry.tensor_role,
        "slot": entry.slot,
        "mean_abs_diff": entry.mean_abs_diff,
        "max_abs_diff": entry.max_abs_diff,
    }


def _hyper_entry_dict(entry: HyperDiffEntry, report: DiffReport) -> dict:
    return {
        "pair": list(entry.pair),
        "position": report.alignment.pair_position(source_id=entry.pair[0]),
        "attr": entry.attr_name,
        "source_value": _jsonable(entry.source_value),
        "target_value": _jsonable(entry.target_value),
    }


def _struct_entry_dict(entry: StructDiffEntry) -> dict:
    return {
        "kind": entry.kind,
        "location": list(entry.location),
        "source_op": entry.source_op,
        "target_op": entry.target_op,
    }


def diff_report_dict(report: DiffReport) -> dict:
    return {
        "source": report.source_name,
        "target": report.target_name,
        "alignment": {
            "score": report.alignment.score,
            "pairs": [list(p) for p in report.alignment.pairs],
            "source_only": list(report.alignment.source_only),
            "target_only": list(report.alignment.target_only),
        },
        "params": [_param_entry_dict(e, report) for e in report.params],
        "hypers": [_hyper_entry_dict(e, report) for e in report.hypers],
        "structure": [_struct_entry_dict(e) for e in report.structure],
        "clean": report.clean,
    }


def write_diff_report(report: DiffReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = _dump_json(out / "diff.json", diff_report_dict(report))
    csv_path = out / "diff.csv"
    with _open_csv(csv_path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["section", "position", "source_id", "target_id",
                    "name", "value_a", "value_b"])
        for e in report.params:
            pos = report.alignment.pair_position(source_id=e.pair[0])
            w.writerow(["param", pos, e.pair[0], e.pair[1],
                        f"{e.tensor_role}/{e.slot}",
                        repr(e.mean_abs_diff), repr(e.max_abs_diff)])
        for e in report.hypers:
            pos = report.alignment.pair_position(source_id=e.pair[0])
            w.writerow(["hyper", pos, e.pair[0], e.pair[1], e.attr_name,
                        json.dumps(_jsonable(e.source_value)),
                        json.dumps(_jsonable(e.target_value))])
        for e in report.structure:
            loc = list(e.location) + ["", ""]
            w.writerow(["structure", "", loc[0], loc[1], e.kind,
                        e.source_op or "", e.target_op or ""])
    return [json_path, csv_path]


# ---------------------------------------------------------------------------
# Differential comparison
# ---------------------------------------------------------------------------


def discrepancy_dict(report: DiscrepancyReport) -> dict:
    discrepant = set(report.triage)
    return {
        "total_inputs": report.total_inputs,
        "discrepant_inputs": report.discrepant_inputs,
        "rate": report.rate,
        "triage": list(report.triage),
        "per_input": [
            {"input_id": input_id,
             "discrepant": input_id in discrepant,
             "tau": report.per_input_tau[input_id]}
            for input_id in sorted(report.per_input_tau)
        ],
    }


def write_discrepancy(report: DiscrepancyReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = _dump_json(out / "discrepancy.json", discrepancy_dict(report))
    csv_path = out / "discrepancy.csv"
    discrepant = set(report.triage)
    with _open_csv(csv_path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["input_id", "discrepant", "tau"])
        for input_id in sorted(report.per_input_tau):
            tau = report.per_input_tau[input_id]
            w.writerow([input_id, int(input_id in discrepant),
                        "" if tau is None else repr(tau)])
    return [json_path, csv_path]


# ---------------------------------------------------------------------------
# Localization
# ---------------------------------------------------------------------------


def _pair_ref(ref: tuple[int, str, str] | None) -> dict | None:
    if ref is None:
        return None
    return {"position": ref[0], "source_id": ref[1], "target_id": ref[2]}


def _suspect_entry_dict(suspect, diff: DiffReport) -> dict:
    entry = suspect.entry
    if isinstance(entry, ParamDiffEntry):
        return _param_entry_dict(entry, diff)
    if isinstance(entry, HyperDiffEntry):
        return _hyper_entry_dict(entry, diff)
    return _struct_entry_dict(entry)


def localization_dict(report: LocalizationReport) -> dict:
    verdict = None
    if report.verdict is not None:
        v = report.verdict
        verdict = {
            "stage_labels": list(v.stage_labels),
            "per_input_labels": {i: list(l) for i, l in
                                 sorted(v.per_input_labels.items())},
            "faulty_edges": [list(e) for e in v.faulty_edges],
            "support": {f"{i}-{j}": list(ids)
                        for (i, j), ids in sorted(v.support.items())},
        }
    return {
        "discrepancy": discrepancy_dict(report.discrepancy),
        "verdict": verdict,
        "implicated_edge": (None if report.implicated_edge is None
                            else list(report.implicated_edge)),
        "edge_labels": (None if report.edge_labels is None
                        else list(report.edge_labels)),
        "diff": None if report.diff is None else diff_report_dict(report.diff),
        "control_input": report.control_input,
        "divergences": [
            {"input_id": d.input_id,
             "is_control": d.is_control,
             "series": list(d.series),
             "structural_pairs": list(d.structural_pairs),
             "first_divergent_pair": _pair_ref(d.first_divergent_pair),
             "max_divergent_pair": _pair_ref(d.max_divergent_pair)}
            for d in report.divergences
        ],
        "suspects": [
            {"rank": s.rank,
             "kind": s.kind,
             "pair_position": s.pair_position,
             "evidence": s.evidence,
             "entry": _suspect_entry_dict(s, report.diff)}
            for s in report.suspects
        ],
        "clean": report.clean,
    }


def _param_column(diff_dict: dict) -> list[float | None]:
    """Largest parameter-tensor mean |delta| per aligned pair, None for
    pairs carrying no parameter tensors (the Parameters curve)."""
    n = len(diff_dict["alignment"]["pairs"])
    column: list[float | None] = [None] * n
    for entry in diff_dict["params"]:
        pos = entry["position"]
        value = entry["mean_abs_diff"]
        if column[pos] is None or value > column[pos]:
            column[pos] = value
    return column


def layer_series(loc_dict: dict):
    """(positions, input_series, param_series) for layers.csv/.svg, built
    from a localization_dict result so file and in-memory paths agree."""
    diff_dict = loc_dict["diff"]
    pairs = diff_dict["alignment"]["pairs"]
    positions = list(range(len(pairs)))
    input_series = []
    for d in loc_dict["divergences"]:
        name = d["input_id"] + (" (control)" if d["is_control"] else "")
        input_series.append((name, list(d["series"])))
    param_series = ("parameters", _param_column(diff_dict))
    return positions, input_series, param_series


def write_localization(report: LocalizationReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    loc_dict = localization_dict(report)
    json_path = _dump_json(out / "localization.json", loc_dict)
    written = [json_path]
    if loc_dict["diff"] is not None:
        csv_path = out / "layers.csv"
        positions, input_series, param_series = layer_series(loc_dict)
        pairs = loc_dict["diff"]["alignment"]["pairs"]
        with _open_csv(csv_path) as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["position", "source_id", "target_id"]
                       + [name for name, _ in input_series] + [param_series[0]])
            for pos in positions:
                row = [pos, pairs[pos][0], pairs[pos][1]]
                for _, values in input_series:
                    v = values[pos]
                    row.append("" if v is None else repr(v))
                pv = param_series[1][pos]
                row.append("" if pv is None else repr(pv))
                w.writerow(row)
        written.append(csv_path)
    return written


# ---------------------------------------------------------------------------
# Repair
# ---------------------------------------------------------------------------


def repair_log_dict(session: RepairSession) -> dict:
    return {
        "before_rate": session.outcome.before_rate,
        "after_rate": session.outcome.after_rate,
        "verdict": session.outcome.verdict,
        "trajectory": [
            {**_log_entry(step.action),
             "rate_after": step.rate_after,
             "kept": step.kept}
            for step in session.trajectory
        ],
        "applied": [_log_entry(a) for a in session.outcome.actions],
    }


def write_repair_log(session: RepairSession, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [_dump_json(out / "repair_log.json", repair_log_dict(session))]
