"""Command-line front end.

Exit codes form the CI contract: 0 success, 1 analysis findings present
(discrepancies, diff entries, suspects, unresolved repairs), 2 usage
error, 3 runtime failure. Every output artifact is deterministic given
the same inputs and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .differential import (DEFAULT_K, DEFAULT_TRIAGE_N, compare_labels,
                           pairwise_rates, run_corpus)
from .diffcore import diff_models
from .errors import ConvSurgeonError
from .fixtures import FIXTURE_KINDS, gen_fixture
from .interpreter import execute, export_trace
from .localize import DEFAULT_TOLERANCE, LocalizeConfig, localize
from .nmif import load_chain, load_model, save_model, validate_model
from .repair import _log_entry, plan_repairs, repair_session, verify
from .reports import (layer_series, localization_dict, write_diff_report,
                      write_discrepancy, write_localization, write_repair_log)
from .svgplot import layer_curves_svg, rate_heatmap_svg
from .tensors import read_nt, write_nt

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_FAILURE = 3


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("CONVSURGEON_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _fmt_rate(rate: float) -> str:
    return f"{rate:.4f}"


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_validate(args) -> int:
    model = load_model(args.model, allow_non_finite=True, validate=False)
    violations = validate_model(model)
    if not violations:
        print(f"ok: {model.name}: {len(model.nodes)} nodes, "
              f"{len(model.initializers)} initializers, layout {model.layout}")
        return EXIT_OK
    for v in violations:
        where = v.node_id or "<graph>"
        print(f"violation: {where}: {v.rule}: {v.detail}")
    print(f"{len(violations)} violation(s) in {args.model}")
    return EXIT_FINDINGS


def _cmd_infer(args) -> int:
    model = load_model(args.model)
    tensor = read_nt(args.input)
    need_capture = args.logits_out is not None
    trace = execute(model, tensor, capture=need_capture, k=args.k,
                    input_id=Path(args.input).stem)
    for rank, (label, score) in enumerate(trace.top_k, start=1):
        print(f"rank {rank}: class {label} score {score:.8f}")
    if trace.non_finite:
        print(f"non-finite activations at: {' '.join(trace.non_finite)}")
    if args.logits_out is not None:
        out_name = model.outputs[0].name
        logits = next(t for _, name, t in trace.entries if name == out_name)
        write_nt(args.logits_out, logits)
        print(f"wrote {args.logits_out}")
    return EXIT_OK


def _cmd_trace(args) -> int:
    model = load_model(args.model)
    tensor = read_nt(args.input)
    trace = execute(model, tensor, capture=True, k=args.k,
                    input_id=Path(args.input).stem)
    export_trace(trace, args.out)
    print(f"wrote {len(trace.entries)} activations to {args.out}")
    if trace.non_finite:
        print(f"non-finite activations at: {' '.join(trace.non_finite)}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    models = [load_model(p) for p in args.models]
    records = run_corpus(models, args.corpus, k=args.k, threads=_threads(args))
    report = compare_labels(records)
    print(f"rate {_fmt_rate(report.rate)} "
          f"({report.discrepant_inputs}/{report.total_inputs} inputs discrepant)")
    for input_id in report.triage[:args.triage_n]:
        tau = report.per_input_tau[input_id]
        tau_text = "undefined" if tau is None else f"{tau:.4f}"
        print(f"  {input_id}: tau {tau_text}")
    if args.out:
        written = write_discrepancy(report, args.out)
        if args.heatmap:
            rates = pairwise_rates(records, len(models))
            labels = [m.name for m in models]
            svg = rate_heatmap_svg(labels, rates.tolist())
            path = Path(args.out) / "heatmap.svg"
            path.write_text(svg, encoding="utf-8")
            written.append(path)
        print("wrote " + " ".join(str(p) for p in written))
    return EXIT_FINDINGS if report.rate > 0.0 else EXIT_OK


def _static_diff(args, section: str) -> int:
    source = load_model(args.source)
    target = load_model(args.target)
    report = diff_models(source, target)
    findings = 0
    if section == "params":
        for e in report.params:
            if e.mean_abs_diff == 0.0 and e.max_abs_diff == 0.0:
                continue
            findings += 1
            pos = report.alignment.pair_position(source_id=e.pair[0])
            print(f"pair {pos} {e.pair[0]} -> {e.pair[1]} "
                  f"{e.tensor_role}/{e.slot} "
                  f"mean {e.mean_abs_diff:.6e} max {e.max_abs_diff:.6e}")
    elif section == "hypers":
        for e in report.hypers:
            findings += 1
            pos = report.alignment.pair_position(source_id=e.pair[0])
            print(f"pair {pos} {e.pair[0]} -> {e.pair[1]} {e.attr_name}: "
                  f"{e.source_value!r} -> {e.target_value!r}")
    else:
        print(f"alignment score {report.alignment.score:.4f} "
              f"({len(report.alignment.pairs)} pairs, "
              f"{len(report.alignment.source_only)} source-only, "
              f"{len(report.alignment.target_only)} target-only)")
        for e in report.structure:
            findings += 1
            ops = ""
            if e.source_op or e.target_op:
                ops = f" ({e.source_op or '-'} -> {e.target_op or '-'})"
            print(f"{e.kind}: {' '.join(e.location)}{ops}")
    if findings == 0:
        print(f"no {section[:-1] if section != 'graph' else 'structural'} differences")
    if args.out:
        written = write_diff_report(report, args.out)
        print("wrote " + " ".join(str(p) for p in written))
    return EXIT_FINDINGS if findings else EXIT_OK


def _print_localization(report) -> None:
    disc = report.discrepancy
    print(f"rate {_fmt_rate(disc.rate)} "
          f"({disc.discrepant_inputs}/{disc.total_inputs} inputs discrepant)")
    if report.clean:
        print("chain is clean; no suspects")
        return
    for edge, ids in sorted(report.verdict.support.items()):
        a, b = report.verdict.stage_labels[edge[0]], report.verdict.stage_labels[edge[1]]
        print(f"faulty edge ({edge[0]},{edge[1]}) {a} -> {b}: "
              f"{len(ids)} supporting input(s)")
    if report.edge_labels is not None:
        print(f"implicated edge: {report.edge_labels[0]} -> {report.edge_labels[1]}")
    for s in report.suspects:
        print(f"suspect {s.rank} [{s.kind}]: {s.evidence}")


def _cmd_localize(args) -> int:
    chain = load_chain(args.chain)
    config = LocalizeConfig(k=args.k, triage_n=args.triage_n,
                            tolerance=args.tolerance, threads=_threads(args))
    report = localize(chain, args.corpus, config)
    _print_localization(report)
    if args.out:
        written = write_localization(report, args.out)
        print("wrote " + " ".join(str(p) for p in written))
    return EXIT_OK if report.clean else EXIT_FINDINGS


def _cmd_repair(args) -> int:
    chain = load_chain(args.chain)
    config = LocalizeConfig(k=args.k, triage_n=args.triage_n,
                            tolerance=args.tolerance, threads=_threads(args))
    report = localize(chain, args.corpus, config)
    if report.clean:
        print("chain is clean; nothing to repair")
        return EXIT_OK
    i, j = report.implicated_edge
    source_label, source = chain.stages[i]
    target_label, target = chain.stages[j]
    actions = plan_repairs(report, source, target)
    session = repair_session(source, target, args.corpus, actions,
                             k=args.k, threads=_threads(args))
    outcome = verify(source, target, session.repaired, args.corpus,
                     actions=session.outcome.actions, k=args.k,
                     threads=_threads(args))
    print(f"repairing stage '{target_label}' against '{source_label}'")
    for step in session.trajectory:
        entry = _log_entry(step.action)
        status = "kept" if step.kept else "reverted"
        print(f"  {entry['kind']} on {entry['node']}: "
              f"rate {_fmt_rate(step.rate_after)} ({status})")
    print(f"verdict {outcome.verdict}: rate "
          f"{_fmt_rate(outcome.before_rate)} -> {_fmt_rate(outcome.after_rate)}")
    out = Path(args.out)
    repaired_path = out / f"{target_label}-repaired.nmif"
    save_model(session.repaired, repaired_path)
    written = write_repair_log(session, out)
    print(f"wrote {repaired_path} " + " ".join(str(p) for p in written))
    return EXIT_OK if outcome.verdict == "Resolved" else EXIT_FINDINGS


def _cmd_report(args) -> int:
    loc_path = Path(args.localization)
    if loc_path.is_dir():
        loc_path = loc_path / "localization.json"
    loc_dict = json.loads(loc_path.read_text(encoding="utf-8"))
    out = Path(args.out) if args.out else loc_path.parent
    out.mkdir(parents=True, exist_ok=True)
    if loc_dict.get("diff") is None:
        print("clean localization report; nothing to plot")
        return EXIT_OK
    positions, input_series, param_series = layer_series(loc_dict)
    svg = layer_curves_svg(positions, input_series, param_series)
    svg_path = out / "layers.svg"
    svg_path.write_text(svg, encoding="utf-8")
    print(f"wrote {svg_path}")
    return EXIT_OK


def _cmd_gen_fixture(args) -> int:
    truth = gen_fixture(args.kind, args.seed, args.out, epsilon=args.epsilon,
                        site=args.site, edge=args.edge,
                        corpus_n=args.corpus_n, classes=args.classes)
    print(f"wrote {args.kind} fixture to {args.out}")
    if truth.get("fault"):
        print(f"fault: {json.dumps(truth['fault'])}")
        print(f"fault edge: {truth['fault_edge']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_threads(p) -> None:
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: CONVSURGEON_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convsurgeon",
        description="Localize and repair faults in converted neural-network "
                    "models over the neutral interchange format.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("validate", help="check a model container, list violations")
    p.add_argument("model", help="model container directory")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("infer", help="run a model on one input, print top-k")
    p.add_argument("model")
    p.add_argument("input", help=".nt tensor file")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--logits-out", default=None,
                   help="also write the raw output tensor to this .nt path")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("trace", help="export per-node activations for one input")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--out", required=True, help="trace output directory")
    p.set_defaults(func=_cmd_trace)

    p = sub.add_parser("compare", help="differential top-k comparison over a corpus")
    p.add_argument("models", nargs="+", help="two or more model containers "
                   "(first is source, last is target)")
    p.add_argument("--corpus", required=True, help="directory of .nt inputs")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--triage-n", type=int, default=DEFAULT_TRIAGE_N)
    p.add_argument("--out", default=None, help="write discrepancy.json/.csv here")
    p.add_argument("--heatmap", action="store_true",
                   help="with --out, write pairwise-rate heatmap.svg")
    _add_threads(p)
    p.set_defaults(func=_cmd_compare)

    for name, section, doc in (
            ("diff-params", "params", "per-layer parameter tensor diff"),
            ("diff-hypers", "hypers", "per-layer hyperparameter diff"),
            ("diff-graph", "graph", "alignment and structural diff")):
        p = sub.add_parser(name, help=doc)
        p.add_argument("source")
        p.add_argument("target")
        p.add_argument("--out", default=None, help="write diff.json/.csv here")
        p.set_defaults(func=lambda a, s=section: _static_diff(a, s))

    p = sub.add_parser("localize", help="full localization pipeline over a chain")
    p.add_argument("--chain", required=True, help="chain.json stage list")
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--triage-n", type=int, default=DEFAULT_TRIAGE_N)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--out", default=None,
                   help="write localization.json and layers.csv here")
    _add_threads(p)
    p.set_defaults(func=_cmd_localize)

    p = sub.add_parser("repair", help="localize, plan, and apply graph repairs")
    p.add_argument("--chain", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--triage-n", type=int, default=DEFAULT_TRIAGE_N)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--out", required=True,
                   help="write repaired container and repair_log.json here")
    _add_threads(p)
    p.set_defaults(func=_cmd_repair)

    p = sub.add_parser("report", help="render layers.svg from localization output")
    p.add_argument("localization",
                   help="localization.json or the directory holding it")
    p.add_argument("--out", default=None,
                   help="SVG output directory (default: next to the input)")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("gen-fixture", help="write a synthetic fixture with ground truth")
    p.add_argument("--kind", required=True, choices=FIXTURE_KINDS)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epsilon", type=float, default=0.01,
                   help="parameter-fault magnitude")
    p.add_argument("--site", default=None,
                   help="fault site base name (e.g. conv2)")
    p.add_argument("--edge", type=int, default=None, choices=(0, 1),
                   help="chain edge receiving the fault")
    p.add_argument("--corpus-n", type=int, default=100)
    p.add_argument("--classes", type=int, default=10)
    p.set_defaults(func=_cmd_gen_fixture)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConvSurgeonError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
