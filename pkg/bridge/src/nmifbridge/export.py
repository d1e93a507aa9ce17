"""Torch to interchange-container export.

The exporter walks an eager module list (a Sequential or any module
whose children form a straight pipeline) rather than tracing a graph:
the interchange op vocabulary is a closed set of 16 classifier ops, so
a linear walk covers every expressible model and keeps failure modes
obvious. Layers with no inference-time behavior (Dropout, Identity)
are skipped. Everything else outside the vocabulary is collected and
reported in one UnsupportedOp, offenders listed by name.

The module is put in eval mode; batch norms export their running
statistics. The walk also builds, per emitted node, a torch callable
computing exactly that node's output, which is what makes golden
activation export line up node for node with the reference
interpreter's trace.
"""

import json
import os
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import UnsupportedOp
from .format import value_info, write_container

LAYOUT = "NCHW"  # torch's native layout; the manifest declares it

_SKIPPED = (nn.Dropout, nn.Dropout2d, nn.Identity)


@dataclass
class Step:
    """One interchange node plus the torch computation producing its output."""

    node_id: str
    op_type: str
    attrs: dict
    params: list[tuple[str, np.ndarray]]
    fn: Callable[[torch.Tensor], torch.Tensor]


@dataclass(frozen=True)
class ExportManifest:
    framework: str
    framework_version: str
    model_id: str
    layout: str
    preprocessing: str
    exported_at: str


def _timestamp() -> str:
    # honor SOURCE_DATE_EPOCH so exports can be made byte-reproducible
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        return datetime.fromtimestamp(int(epoch), timezone.utc).isoformat()
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_export_manifest(out_dir: str | Path, model_id: str,
                          preprocessing: str) -> Path:
    record = ExportManifest(
        framework="torch",
        framework_version=torch.__version__,
        model_id=model_id,
        layout=LAYOUT,
        preprocessing=preprocessing,
        exported_at=_timestamp(),
    )
    path = Path(out_dir) / "export_manifest.json"
    path.write_text(json.dumps(asdict(record), indent=2) + "\n",
                    encoding="utf-8")
    return path


def _np(t: torch.Tensor) -> np.ndarray:
    return np.ascontiguousarray(t.detach().cpu().numpy().astype(np.float32))


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _sym_pads(padding) -> list[int]:
    ph, pw = _pair(padding)
    return [ph, pw, ph, pw]  # top, left, bottom, right


def plan_steps(module: nn.Module, input_shape) -> tuple[list[Step], tuple[int, ...]]:
    """Map every child layer onto interchange nodes; returns the steps
    and the model's output shape (probed with a zero tensor)."""
    module.eval()
    children = list(module.named_children()) or [("m0", module)]
    steps: list[Step] = []
    offenders: list[str] = []
    probe = torch.zeros(*input_shape)

    def emit(step: Step):
        nonlocal probe
        steps.append(step)
        if not offenders:
            with torch.no_grad():
                probe = step.fn(probe)

    def reject(name: str, m: nn.Module, why: str = ""):
        label = f"{name} ({type(m).__name__})"
        offenders.append(label + (f": {why}" if why else ""))

    for name, m in children:
        base = name if not name.isdigit() else f"{type(m).__name__.lower()}{name}"
        if isinstance(m, _SKIPPED):
            continue
        elif isinstance(m, nn.Conv2d):
            if m.padding_mode != "zeros" or isinstance(m.padding, str):
                reject(name, m, f"padding {m.padding!r} mode {m.padding_mode!r}")
                continue
            w = m.weight
            g = int(m.groups)
            attrs = {"strides": list(_pair(m.stride)),
                     "pads": _sym_pads(m.padding),
                     "dilations": list(_pair(m.dilation))}
            if g == m.in_channels and g > 1 and w.shape[1] == 1:
                op = "DepthwiseConv2D"
            else:
                op = "Conv2D"
                attrs["groups"] = g
            stride, pad, dil = m.stride, m.padding, m.dilation
            emit(Step(base, op, attrs, [(f"{base}_w", _np(w))],
                      lambda x, w=w, s=stride, p=pad, d=dil, g=g:
                          F.conv2d(x, w, None, s, p, d, g)))
            if m.bias is not None:
                b = m.bias
                emit(Step(f"{base}_bias", "BiasAdd", {},
                          [(f"{base}_b", _np(b))],
                          lambda x, b=b: x + b.view(1, -1, 1, 1)))
        elif isinstance(m, nn.Linear):
            w = m.weight
            emit(Step(base, "Dense", {}, [(f"{base}_w", _np(w))],
                      lambda x, w=w: F.linear(x, w, None)))
            if m.bias is not None:
                b = m.bias
                emit(Step(f"{base}_bias", "BiasAdd", {},
                          [(f"{base}_b", _np(b))],
                          lambda x, b=b: x + b))
        elif isinstance(m, nn.BatchNorm2d):
            if not (m.affine and m.track_running_stats):
                reject(name, m, "needs affine weights and running stats")
                continue
            params = [(f"{base}_g", _np(m.weight)), (f"{base}_b", _np(m.bias)),
                      (f"{base}_m", _np(m.running_mean)),
                      (f"{base}_v", _np(m.running_var))]
            emit(Step(base, "BatchNorm", {"epsilon": float(m.eps)}, params,
                      lambda x, m=m: F.batch_norm(
                          x, m.running_mean, m.running_var, m.weight, m.bias,
                          False, 0.0, m.eps)))
        elif isinstance(m, nn.ReLU):
            emit(Step(base, "ReLU", {}, [], torch.relu))
        elif isinstance(m, nn.ReLU6):
            emit(Step(base, "ReLU6", {}, [],
                      lambda x: F.hardtanh(x, 0.0, 6.0)))
        elif isinstance(m, nn.Softmax):
            if m.dim is None or (not offenders
                                 and (m.dim % probe.ndim) != probe.ndim - 1):
                reject(name, m, f"dim {m.dim} is not the last axis")
                continue
            emit(Step(base, "Softmax", {}, [],
                      lambda x: F.softmax(x, dim=-1)))
        elif isinstance(m, nn.MaxPool2d):
            if _pair(m.dilation) != (1, 1) or m.ceil_mode or m.return_indices:
                reject(name, m, "dilation/ceil_mode/return_indices")
                continue
            kernel = _pair(m.kernel_size)
            stride = _pair(m.stride if m.stride is not None else m.kernel_size)
            emit(Step(base, "MaxPool2D",
                      {"kernel": list(kernel), "strides": list(stride),
                       "pads": _sym_pads(m.padding)},
                      [],
                      lambda x, m=m: F.max_pool2d(x, m.kernel_size, m.stride,
                                                  m.padding)))
        elif isinstance(m, nn.AvgPool2d):
            # the interchange AvgPool divides by the valid-cell count
            if m.ceil_mode or m.divisor_override is not None:
                reject(name, m, "ceil_mode/divisor_override")
                continue
            if max(_pair(m.padding)) > 0 and m.count_include_pad:
                reject(name, m, "count_include_pad with padding")
                continue
            kernel = _pair(m.kernel_size)
            stride = _pair(m.stride if m.stride is not None else m.kernel_size)
            emit(Step(base, "AvgPool2D",
                      {"kernel": list(kernel), "strides": list(stride),
                       "pads": _sym_pads(m.padding)},
                      [],
                      lambda x, m=m: F.avg_pool2d(
                          x, m.kernel_size, m.stride, m.padding,
                          ceil_mode=False,
                          count_include_pad=m.count_include_pad)))
        elif isinstance(m, nn.AdaptiveAvgPool2d):
            if _pair(m.output_size if m.output_size is not None else 1) != (1, 1):
                reject(name, m, f"output size {m.output_size} != 1")
                continue
            # interchange GlobalAvgPool2D emits rank 2, not [n,c,1,1]
            emit(Step(base, "GlobalAvgPool2D", {}, [],
                      lambda x: x.mean(dim=(2, 3))))
        elif isinstance(m, nn.Flatten):
            if m.start_dim != 1 or m.end_dim != -1:
                reject(name, m, f"dims {m.start_dim}..{m.end_dim}")
                continue
            emit(Step(base, "Flatten", {}, [],
                      lambda x: torch.flatten(x, 1)))
        elif isinstance(m, nn.ZeroPad2d):
            pl, pr, pt, pb = (int(p) for p in m.padding)
            emit(Step(base, "Pad",
                      {"pads": [0, 0, 0, 0, pt, pb, pl, pr]},
                      [],
                      lambda x, m=m: F.pad(x, m.padding)))
        else:
            reject(name, m)

    if offenders:
        raise UnsupportedOp(offenders)
    if not steps:
        raise UnsupportedOp(["<empty module>"])
    return steps, tuple(int(d) for d in probe.shape)


def export_model(module: nn.Module, input_shape, out_dir: str | Path,
                 name: str = "exported", model_id: str | None = None,
                 preprocessing: str = "none") -> Path:
    """Write `module` as an interchange container at out_dir, plus an
    export_manifest.json recording provenance."""
    steps, output_shape = plan_steps(module, input_shape)

    nodes = []
    initializers: dict[str, np.ndarray] = {}
    value = "input"
    for step in steps:
        param_names = []
        for pname, arr in step.params:
            initializers[pname] = arr
            param_names.append(pname)
        out_name = f"{step.node_id}_out"
        nodes.append({
            "id": step.node_id,
            "op_type": step.op_type,
            "attrs": step.attrs,
            "inputs": [value] + param_names,
            "outputs": [out_name],
        })
        value = out_name

    out = write_container(
        out_dir, name, LAYOUT,
        inputs=[value_info("input", input_shape)],
        outputs=[value_info(value, output_shape)],
        nodes=nodes,
        initializers=initializers,
    )
    write_export_manifest(out, model_id or name, preprocessing)
    return out
