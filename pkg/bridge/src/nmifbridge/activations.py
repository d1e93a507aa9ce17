"""Golden per-node activations from torch, in the trace directory layout.

The directory matches what the reference interpreter's trace export
writes: one ``<seq>_<node_id>.nt`` per node plus ``trace.json`` with
the execution order, output names, top-k of the final output, and any
non-finite node ids. Because the node decomposition comes from the same
walk as the model export (a torch Conv2d becomes Conv2D + BiasAdd
here too), files line up one to one with the interpreter's.
"""

import json
import math
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .export import plan_steps
from .format import write_nt


def _top_k(logits: np.ndarray, k: int) -> list[list]:
    # score descending, index ascending on ties; NaN sorts last
    row = [(math.inf if math.isnan(float(s)) else -float(s), i)
           for i, s in enumerate(logits)]
    row.sort()
    return [[i, -key if key != math.inf else float("nan")]
            for key, i in row[:k]]


def export_activations(module: nn.Module, input_array: np.ndarray,
                       out_dir: str | Path, input_id: str = "input",
                       k: int = 5) -> Path:
    steps, _ = plan_steps(module, input_array.shape)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    order, outputs, non_finite = [], [], []
    x = torch.from_numpy(np.ascontiguousarray(input_array, dtype=np.float32))
    with torch.no_grad():
        for seq, step in enumerate(steps):
            x = step.fn(x)
            arr = np.ascontiguousarray(x.numpy(), dtype=np.float32)
            write_nt(out / f"{seq:04d}_{step.node_id}.nt", arr)
            order.append(step.node_id)
            outputs.append(f"{step.node_id}_out")
            if not np.isfinite(arr).all():
                non_finite.append(step.node_id)

    logits = np.ascontiguousarray(x.numpy(), dtype=np.float32).reshape(-1)
    index = {
        "input_id": input_id,
        "order": order,
        "outputs": outputs,
        "top_k": _top_k(logits, min(k, logits.size)),
        "non_finite": non_finite,
    }
    (out / "trace.json").write_text(json.dumps(index, indent=2) + "\n",
                                    encoding="utf-8")
    return out
