"""Export the demo classifier, a small image corpus, and one golden
activation trace, then suggest the analyzer commands to run on them.

    python3 bridge/scripts/export_demo.py --out demo-export
"""

import argparse
from pathlib import Path

import numpy as np
from PIL import Image

from nmifbridge import PreprocessConfig, export_activations, export_corpus, \
    export_model
from nmifbridge.demo import DEMO_INPUT_SHAPE, demo_cnn


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="demo-export")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--images", type=int, default=4)
    args = ap.parse_args()

    out = Path(args.out)
    model = demo_cnn(seed=args.seed)
    container = export_model(model, DEMO_INPUT_SHAPE, out / "demo.nmif",
                             name="demo", model_id=f"demo_cnn(seed={args.seed})")
    print(f"model     -> {container}")

    # synthetic photos so the corpus path works without a dataset
    rng = np.random.default_rng(args.seed)
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.images):
        pixels = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        Image.fromarray(pixels).save(img_dir / f"img_{i:02d}.png")
    size = DEMO_INPUT_SHAPE[-1]
    config = PreprocessConfig(size=size, mean=(0.5, 0.5, 0.5), std=(0.5, 0.5, 0.5))
    written = export_corpus(img_dir, config, out / "corpus")
    print(f"corpus    -> {len(written)} tensors in {out / 'corpus'}")

    sample = rng.standard_normal(DEMO_INPUT_SHAPE).astype(np.float32)
    trace = export_activations(model, sample, out / "golden", input_id="sample")
    print(f"golden    -> {trace}")

    print("\nanalyze with:")
    print(f"  convsurgeon validate {container}")
    print(f"  convsurgeon infer {container} {out / 'corpus'}/img_00.nt")


if __name__ == "__main__":
    main()
