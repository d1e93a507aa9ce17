"""Reference interpreter: examples, oracle agreement, determinism."""

import numpy as np
import pytest

from convsurgeon.errors import ShapeMismatch, ValidationFailed
from convsurgeon.fixtures import (INPUT_SHAPE, build_smallcnn, gap_cnn_params,
                                  build_gap_cnn, smallcnn_params)
from convsurgeon.interpreter import execute, export_trace, load_trace, topk_labels
from convsurgeon.nmif import ModelGraph, NodeSpec, ValueInfo
from convsurgeon.tensors import DType, TensorData
from oracles import smallcnn_forward_ref, softmax_ref, topk_ref

F32 = np.float32


def _identity_model():
    node = NodeSpec.make("same", "Reshape", ["in"], ["out"], shape=[2, 6])
    return ModelGraph(
        name="identity",
        inputs=(ValueInfo("in", DType.F32, (2, 6)),),
        outputs=(ValueInfo("out", DType.F32, (2, 6)),),
        nodes=(node,),
        initializers={},
        layout="NCHW",
    )


def test_identity_output_equals_input(rng):
    x = rng.standard_normal((2, 6)).astype(F32)
    trace = execute(_identity_model(), TensorData.from_array(x))
    out = trace.entries[-1][2].array
    assert np.array_equal(out, x)
    want = topk_ref(softmax_ref(x)[0], 5)
    assert [i for i, _ in trace.top_k] == [i for i, _ in want]


def test_zero_input_zero_bias_tie_rule(rng):
    params = gap_cnn_params(rng)
    for key in ("b1", "b2", "b3", "bd"):
        params[key] = np.zeros_like(params[key])
    model = build_gap_cnn(params, name="zeros")
    x = TensorData.from_array(np.zeros(INPUT_SHAPE, dtype=F32))
    trace = execute(model, x, capture=True, k=5)
    logits = trace.entries[-1][2].array
    assert np.all(logits == 0.0)
    assert [i for i, _ in trace.top_k] == [0, 1, 2, 3, 4]


def test_smallcnn_matches_straight_line_oracle(rng):
    params = smallcnn_params(rng)
    model = build_smallcnn(params)
    worst = 0.0
    for _ in range(50):
        x = rng.standard_normal(INPUT_SHAPE).astype(F32)
        trace = execute(model, TensorData.from_array(x), capture=True)
        got = trace.entries[-1][2].array
        want = smallcnn_forward_ref(params, x)
        worst = max(worst, float(np.max(np.abs(got - want))))
    assert worst <= 1e-6


def test_capture_neutrality(rng):
    model = build_smallcnn(smallcnn_params(rng))
    x = TensorData.from_array(rng.standard_normal(INPUT_SHAPE).astype(F32))
    with_capture = execute(model, x, capture=True, k=5)
    without = execute(model, x, capture=False, k=5)
    assert with_capture.top_k == without.top_k
    assert without.entries == ()


def test_execute_bitwise_deterministic(rng):
    model = build_smallcnn(smallcnn_params(rng))
    x = TensorData.from_array(rng.standard_normal(INPUT_SHAPE).astype(F32))
    a = execute(model, x, capture=True)
    b = execute(model, x, capture=True)
    assert len(a.entries) == len(b.entries)
    for (ida, na, ta), (idb, nb, tb) in zip(a.entries, b.entries):
        assert ida == idb and na == nb
        assert ta.bit_equal(tb)
    assert a.top_k == b.top_k


def test_input_shape_mismatch(rng):
    model = build_smallcnn(smallcnn_params(rng))
    bad = TensorData.from_array(rng.standard_normal((1, 3, 8, 8)).astype(F32))
    with pytest.raises(ShapeMismatch):
        execute(model, bad)


def test_invalid_model_rejected(rng):
    model = build_smallcnn(smallcnn_params(rng))
    broken = ModelGraph(
        name=model.name, inputs=model.inputs, outputs=model.outputs,
        nodes=model.nodes[:-1], initializers=model.initializers,
        layout=model.layout)
    with pytest.raises(ValidationFailed):
        execute(broken, TensorData.from_array(
            np.zeros(INPUT_SHAPE, dtype=F32)))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_reported_not_trapped():
    # c1 lands at 1e38 (finite in binary32); c2 squares past the max
    w = TensorData.from_array(np.full((1, 1, 1, 1), 1e18, dtype=F32))
    nodes = (
        NodeSpec.make("c1", "Conv2D", ["in", "w"], ["y"],
                      strides=[1, 1], pads=[0, 0, 0, 0], dilations=[1, 1], groups=1),
        NodeSpec.make("c2", "Conv2D", ["y", "w"], ["z"],
                      strides=[1, 1], pads=[0, 0, 0, 0], dilations=[1, 1], groups=1),
        NodeSpec.make("f", "Flatten", ["z"], ["out"]),
    )
    model = ModelGraph(
        name="blowup",
        inputs=(ValueInfo("in", DType.F32, (1, 1, 2, 2)),),
        outputs=(ValueInfo("out", DType.F32, (1, 4)),),
        nodes=nodes,
        initializers={"w": w},
        layout="NCHW",
    )
    x = TensorData.from_array(np.full((1, 1, 2, 2), 1e20, dtype=F32))
    trace = execute(model, x, capture=True)
    assert "c2" in trace.non_finite
    assert "c1" not in trace.non_finite


def test_topk_examples_and_errors():
    logits = TensorData.from_array(np.array([[0.1, 0.9, 0.5]], dtype=F32))
    assert topk_labels(logits, 1) == [(1, pytest.approx(0.9))]
    tied = TensorData.from_array(np.zeros((1, 6), dtype=F32))
    assert [i for i, _ in topk_labels(tied, 3)] == [0, 1, 2]
    with pytest.raises(ValueError):
        topk_labels(logits, 0)
    with pytest.raises(ValueError):
        topk_labels(logits, 4)
    with pytest.raises(ShapeMismatch):
        topk_labels(TensorData.from_array(np.zeros(3, dtype=F32)), 1)


def test_topk_sort_oracle(rng):
    for _ in range(1000):
        c = int(rng.integers(5, 20))
        row = rng.standard_normal(c).astype(F32)
        logits = TensorData.from_array(row.reshape(1, -1))
        got = topk_labels(logits, 5)
        want = topk_ref(row, 5)
        assert [i for i, _ in got] == [i for i, _ in want]


def test_nan_scores_rank_last():
    row = np.array([[np.nan, 0.5, 0.1]], dtype=F32)
    got = topk_labels(TensorData.from_array(row), 3)
    assert [i for i, _ in got] == [1, 2, 0]


def test_trace_export_round_trip(tmp_path, rng):
    model = build_smallcnn(smallcnn_params(rng))
    x = TensorData.from_array(rng.standard_normal(INPUT_SHAPE).astype(F32))
    trace = execute(model, x, capture=True, input_id="probe")
    export_trace(trace, tmp_path / "tr")
    assert (tmp_path / "tr" / "trace.json").is_file()
    back = load_trace(tmp_path / "tr")
    assert back.input_id == "probe"
    assert [e[0] for e in back.entries] == [e[0] for e in trace.entries]
    for (_, _, ta), (_, _, tb) in zip(trace.entries, back.entries):
        assert ta.bit_equal(tb)
    assert back.top_k == trace.top_k
