"""End-to-end walkthrough on a generated fixture.

Generates a faulted three-stage conversion chain, localizes the fault,
plans and applies repairs, verifies, and writes every artifact the CLI
would write. Prints a short narrative along the way.

    python3 scripts/run_demo.py --out demo-out
"""

import argparse
import json
from pathlib import Path

from convsurgeon.fixtures import gen_fixture
from convsurgeon.localize import localize
from convsurgeon.nmif import load_chain, save_model
from convsurgeon.repair import plan_repairs, repair_session, verify
from convsurgeon.reports import layer_series, localization_dict, \
    write_localization, write_repair_log
from convsurgeon.svgplot import layer_curves_svg


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="demo-out", help="working directory")
    ap.add_argument("--kind", default="chain-param-fault",
                    choices=["chain-param-fault", "chain-hyper-fault",
                             "chain-substitution", "chain-extranode"])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--epsilon", type=float, default=0.01)
    ap.add_argument("--site", default="conv2")
    args = ap.parse_args()

    out = Path(args.out)
    fixture = out / "fixture"
    truth = gen_fixture(args.kind, args.seed, fixture,
                        epsilon=args.epsilon, site=args.site)
    print(f"fixture: {args.kind} seed {args.seed} -> {fixture}")
    print(f"injected fault: {json.dumps(truth['fault'])}")
    print(f"injected edge:  {truth['fault_edge']}")

    chain = load_chain(fixture / "chain.json")
    corpus = str(fixture / "corpus")
    report = localize(chain, corpus)
    disc = report.discrepancy
    print(f"\ndiscrepancy rate {disc.rate:.4f} "
          f"({disc.discrepant_inputs}/{disc.total_inputs} inputs)")
    if report.clean:
        print("chain is clean; nothing to do")
        return
    print(f"implicated edge: {report.edge_labels[0]} -> {report.edge_labels[1]}")
    for s in report.suspects:
        print(f"  suspect {s.rank} [{s.kind}]: {s.evidence}")
    written = write_localization(report, out)

    i, j = report.implicated_edge
    source, target = chain.models[i], chain.models[j]
    actions = plan_repairs(report, source, target)
    print(f"\nplanned {len(actions)} repair action(s)")
    session = repair_session(source, target, corpus, actions)
    for step in session.trajectory:
        status = "kept" if step.kept else "reverted"
        print(f"  {type(step.action).__name__}: "
              f"rate {step.rate_after:.4f} ({status})")
    outcome = verify(source, target, session.repaired, corpus,
                     actions=session.outcome.actions)
    print(f"verdict {outcome.verdict}: "
          f"rate {outcome.before_rate:.4f} -> {outcome.after_rate:.4f}")

    repaired_path = out / f"{chain.labels[j]}-repaired.nmif"
    save_model(session.repaired, repaired_path)
    written += write_repair_log(session, out)
    written.append(repaired_path)

    # same figure the `report` subcommand renders
    positions, input_series, param_series = layer_series(localization_dict(report))
    svg_path = out / "layers.svg"
    svg_path.write_text(layer_curves_svg(positions, input_series, param_series),
                        encoding="utf-8")
    written.append(svg_path)
    print("\nartifacts:")
    for p in written:
        print(f"  {p}")


if __name__ == "__main__":
    main()
