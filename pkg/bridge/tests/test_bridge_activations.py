import json

import numpy as np
import pytest
from torch import nn

from convsurgeon.interpreter import execute
from convsurgeon.nmif import load_model
from convsurgeon.tensors import TensorData, read_nt
from nmifbridge import UnsupportedOp, export_activations
from nmifbridge.demo import DEMO_INPUT_SHAPE


@pytest.fixture(scope="module")
def sample():
    rng = np.random.default_rng(42)
    return rng.standard_normal(DEMO_INPUT_SHAPE).astype(np.float32)


def test_trace_directory_layout(demo_model, demo_container, sample, tmp_path):
    out = export_activations(demo_model, sample, tmp_path / "golden",
                             input_id="sample_042")
    model = load_model(demo_container)
    files = sorted(p.name for p in out.glob("*.nt"))
    assert len(files) == len(model.nodes)
    assert files[0] == f"0000_{model.nodes[0].id}.nt"

    index = json.loads((out / "trace.json").read_text())
    assert index["input_id"] == "sample_042"
    assert index["order"] == [n.id for n in model.nodes]
    assert index["outputs"] == [n.outputs[0] for n in model.nodes]
    assert index["non_finite"] == []
    assert len(index["top_k"]) == 5


def test_golden_matches_interpreter(demo_model, demo_container, sample, tmp_path):
    out = export_activations(demo_model, sample, tmp_path / "golden")
    model = load_model(demo_container)
    trace = execute(model, TensorData.from_array(sample), capture=True)
    worst = 0.0
    for seq, (node_id, _, tensor) in enumerate(trace.entries):
        golden = read_nt(out / f"{seq:04d}_{node_id}.nt")
        assert golden.shape == tensor.shape
        worst = max(worst, float(np.max(np.abs(
            golden.array.astype(np.float64) - tensor.array.astype(np.float64)))))
    assert worst <= 1e-4


def test_topk_agrees_with_interpreter(demo_model, demo_container, sample, tmp_path):
    out = export_activations(demo_model, sample, tmp_path / "golden")
    index = json.loads((out / "trace.json").read_text())
    model = load_model(demo_container)
    trace = execute(model, TensorData.from_array(sample), capture=False)
    assert [i for i, _ in index["top_k"]] == [i for i, _ in trace.top_k]


def test_unsupported_model_fails_loudly(sample, tmp_path):
    with pytest.raises(UnsupportedOp, match="Sigmoid"):
        export_activations(nn.Sequential(nn.Sigmoid()), sample, tmp_path / "g")
