"""Sweep weight-perturbation magnitude against output discrepancy.

For each epsilon, shifts one conv weight tensor of the reference CNN by
a constant and measures top-1 discrepancy rate and Kendall's Tau of the
top-5 lists over a fresh random corpus. Small parameter deviations can
flip a sizable share of labels, which is what makes rank correlation a
useful triage signal.

    python3 scripts/sweep_epsilon.py --corpus-n 200
"""

import argparse
import statistics
import tempfile
from pathlib import Path

import numpy as np

from convsurgeon.differential import compare_labels, run_corpus
from convsurgeon.fixtures import build_gap_cnn, gap_cnn_params, perturb_weight
from convsurgeon.tensors import TensorData, write_nt

EPSILONS = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--site", default="conv2", help="node whose weight is shifted")
    ap.add_argument("--corpus-n", type=int, default=100)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    source = build_gap_cnn(gap_cnn_params(rng), "source")

    with tempfile.TemporaryDirectory() as tmp:
        corpus = Path(tmp)
        for i in range(args.corpus_n):
            arr = rng.standard_normal((1, 3, 16, 16)).astype(np.float32)
            write_nt(corpus / f"input_{i:03d}.nt", TensorData.from_array(arr))

        print(f"site {args.site}, corpus {args.corpus_n}, seed {args.seed}")
        print(f"{'epsilon':>10} {'rate':>8} {'mean tau':>9} {'min tau':>8}")
        for eps in EPSILONS:
            target = perturb_weight(source, args.site, eps)
            records = run_corpus([source, target], corpus, threads=args.threads)
            report = compare_labels(records)
            taus = [t for t in report.per_input_tau.values() if t is not None]
            print(f"{eps:>10.0e} {report.rate:>8.4f} "
                  f"{statistics.mean(taus):>9.4f} {min(taus):>8.4f}")


if __name__ == "__main__":
    main()
