"""Container round-trips, validation rules, and graph utilities."""

import json

import numpy as np
import pytest

from convsurgeon.errors import (CyclicGraph, DanglingReference, MagicMismatch,
                                NonFiniteTensor, SchemaViolation,
                                ValidationFailed, VersionUnsupported)
from convsurgeon.fixtures import build_gap_cnn, build_smallcnn, gap_cnn_params, smallcnn_params
from convsurgeon.nmif import (BLOB_ALIGNMENT, ConversionChain, ModelGraph,
                              NodeSpec, ValueInfo, load_chain, load_model,
                              save_model, structural_equal, topological_order,
                              validate_model, with_metadata)
from convsurgeon.tensors import DType, TensorData


def _tiny_model(name="tiny"):
    w = TensorData.from_array(np.ones((2, 1, 1, 1), dtype=np.float32))
    nodes = (
        NodeSpec.make("c", "Conv2D", ["in", "w"], ["y"],
                      strides=[1, 1], pads=[0, 0, 0, 0], dilations=[1, 1], groups=1),
        NodeSpec.make("r", "ReLU", ["y"], ["out"]),
    )
    return ModelGraph(
        name=name,
        inputs=(ValueInfo("in", DType.F32, (1, 1, 4, 4)),),
        outputs=(ValueInfo("out", DType.F32, (1, 2, 4, 4)),),
        nodes=nodes,
        initializers={"w": w},
        layout="NCHW",
    )


def test_save_load_round_trip(tmp_path, rng):
    model = build_smallcnn(smallcnn_params(rng))
    path = tmp_path / "m.nmif"
    save_model(model, path)
    back = load_model(path)
    assert structural_equal(model, back)


def test_blob_alignment(tmp_path, rng):
    model = build_gap_cnn(gap_cnn_params(rng), name="g")
    path = tmp_path / "g.nmif"
    save_model(model, path)
    manifest = json.loads((path / "manifest.json").read_text())
    for entry in manifest["initializers"]:
        assert entry["offset"] % BLOB_ALIGNMENT == 0


def test_manifest_is_canonical(tmp_path, rng):
    model = build_smallcnn(smallcnn_params(rng))
    a, b = tmp_path / "a", tmp_path / "b"
    save_model(model, a)
    save_model(model, b)
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    assert (a / "tensors.bin").read_bytes() == (b / "tensors.bin").read_bytes()


def test_metadata_round_trip(tmp_path):
    model = with_metadata(_tiny_model(), origin="unit-test", note="x")
    path = tmp_path / "m.nmif"
    save_model(model, path)
    back = load_model(path)
    assert back.metadata == {"origin": "unit-test", "note": "x"}


def test_validate_clean():
    assert validate_model(_tiny_model()) == []


def test_validate_duplicate_node_id():
    m = _tiny_model()
    dup = m.nodes[1]
    bad = ModelGraph(name=m.name, inputs=m.inputs, outputs=m.outputs,
                     nodes=(m.nodes[0], dup,
                            NodeSpec.make("r", "ReLU", ["y"], ["out2"])),
                     initializers=m.initializers, layout=m.layout)
    rules = {v.rule for v in validate_model(bad)}
    assert "duplicate-node-id" in rules


def test_validate_dangling_reference():
    m = _tiny_model()
    bad = ModelGraph(name=m.name, inputs=m.inputs, outputs=m.outputs,
                     nodes=(m.nodes[0],
                            NodeSpec.make("r", "ReLU", ["ghost"], ["out"])),
                     initializers=m.initializers, layout=m.layout)
    rules = {v.rule for v in validate_model(bad)}
    assert "dangling-reference" in rules


def test_validate_unknown_op():
    m = _tiny_model()
    bad = ModelGraph(name=m.name, inputs=m.inputs, outputs=m.outputs,
                     nodes=(m.nodes[0],
                            NodeSpec.make("r", "Gelu", ["y"], ["out"])),
                     initializers=m.initializers, layout=m.layout)
    rules = {v.rule for v in validate_model(bad)}
    assert "op-type" in rules


def test_validate_attr_schema():
    m = _tiny_model()
    node = NodeSpec.make("c", "Conv2D", ["in", "w"], ["y"],
                         strides=[1, 1], pads=[0, 0, 0, 0], dilations=[1, 1])
    bad = ModelGraph(name=m.name, inputs=m.inputs, outputs=m.outputs,
                     nodes=(node, m.nodes[1]),
                     initializers=m.initializers, layout=m.layout)
    assert any(v.rule == "attr-schema" for v in validate_model(bad))


def test_validate_cycle():
    m = _tiny_model()
    loop = (
        NodeSpec.make("a", "Add", ["in", "z"], ["y"]),
        NodeSpec.make("b", "ReLU", ["y"], ["z"]),
        NodeSpec.make("r", "ReLU", ["z"], ["out"]),
    )
    bad = ModelGraph(name=m.name, inputs=m.inputs, outputs=m.outputs,
                     nodes=loop, initializers={}, layout=m.layout)
    rules = {v.rule for v in validate_model(bad)}
    assert "cycle" in rules


def test_validate_param_slot_requires_initializer():
    m = _tiny_model()
    nodes = (
        NodeSpec.make("p", "ReLU", ["in"], ["w2"]),
        NodeSpec.make("c", "Conv2D", ["in", "w2"], ["y"],
                      strides=[1, 1], pads=[0, 0, 0, 0], dilations=[1, 1], groups=1),
        NodeSpec.make("r", "ReLU", ["y"], ["out"]),
    )
    bad = ModelGraph(name=m.name, inputs=m.inputs, outputs=m.outputs,
                     nodes=nodes, initializers={}, layout=m.layout)
    assert any(v.rule == "param-slot" for v in validate_model(bad))


def test_validate_output_shape_disagreement():
    m = _tiny_model()
    bad = ModelGraph(name=m.name, inputs=m.inputs,
                     outputs=(ValueInfo("out", DType.F32, (1, 2, 9, 9)),),
                     nodes=m.nodes, initializers=m.initializers, layout=m.layout)
    assert any(v.rule == "output-shape" for v in validate_model(bad))


def test_save_refuses_invalid(tmp_path):
    m = _tiny_model()
    bad = ModelGraph(name=m.name, inputs=m.inputs, outputs=m.outputs,
                     nodes=(m.nodes[0],
                            NodeSpec.make("r", "ReLU", ["ghost"], ["out"])),
                     initializers=m.initializers, layout=m.layout)
    with pytest.raises(ValidationFailed):
        save_model(bad, tmp_path / "bad.nmif")


def test_load_missing_manifest(tmp_path):
    (tmp_path / "empty.nmif").mkdir()
    with pytest.raises(MagicMismatch):
        load_model(tmp_path / "empty.nmif")


def test_load_bad_version(tmp_path):
    save_model(_tiny_model(), tmp_path / "m.nmif")
    manifest_path = tmp_path / "m.nmif" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["format_version"] = 9
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(VersionUnsupported):
        load_model(tmp_path / "m.nmif")


def test_load_blob_out_of_bounds(tmp_path):
    save_model(_tiny_model(), tmp_path / "m.nmif")
    blob = tmp_path / "m.nmif" / "tensors.bin"
    blob.write_bytes(blob.read_bytes()[:2])
    with pytest.raises(Exception) as err:
        load_model(tmp_path / "m.nmif")
    assert err.typename in ("BlobOutOfBounds", "SchemaViolation")


def test_load_non_finite_guard(tmp_path):
    m = _tiny_model()
    bad_w = TensorData.from_array(
        np.full((2, 1, 1, 1), np.nan, dtype=np.float32))
    bad = ModelGraph(name=m.name, inputs=m.inputs, outputs=m.outputs,
                     nodes=m.nodes, initializers={"w": bad_w}, layout=m.layout)
    save_model(bad, tmp_path / "m.nmif")
    with pytest.raises(NonFiniteTensor):
        load_model(tmp_path / "m.nmif")
    back = load_model(tmp_path / "m.nmif", allow_non_finite=True)
    assert not back.initializers["w"].is_finite()


def test_load_dangling_maps_to_error(tmp_path):
    save_model(_tiny_model(), tmp_path / "m.nmif")
    manifest_path = tmp_path / "m.nmif" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["nodes"][1]["inputs"] = ["ghost"]
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(DanglingReference):
        load_model(tmp_path / "m.nmif")


def test_load_cycle_maps_to_error(tmp_path):
    save_model(_tiny_model(), tmp_path / "m.nmif")
    manifest_path = tmp_path / "m.nmif" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    # r consumes y and also feeds it back into c's data input
    manifest["nodes"][0]["inputs"] = ["out", "w"]
    manifest["inputs"] = []
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises((CyclicGraph, SchemaViolation)):
        load_model(tmp_path / "m.nmif")


def test_topological_order_identity_and_cycle():
    m = _tiny_model()
    assert [m.nodes[i].id for i in topological_order(m)] == ["c", "r"]
    shuffled = ModelGraph(name=m.name, inputs=m.inputs, outputs=m.outputs,
                          nodes=(m.nodes[1], m.nodes[0]),
                          initializers=m.initializers, layout=m.layout)
    assert [shuffled.nodes[i].id for i in topological_order(shuffled)] == ["c", "r"]


def test_chain_round_trip(tmp_path, rng):
    a = build_gap_cnn(gap_cnn_params(rng), name="a", prefix="a_")
    b = build_gap_cnn(gap_cnn_params(rng), name="b", prefix="b_")
    save_model(a, tmp_path / "a.nmif")
    save_model(b, tmp_path / "b.nmif")
    spec = {"stages": [{"label": "src", "path": "a.nmif"},
                       {"label": "dst", "path": "b.nmif"}]}
    (tmp_path / "chain.json").write_text(json.dumps(spec))
    chain = load_chain(tmp_path / "chain.json")
    assert [label for label, _ in chain.stages] == ["src", "dst"]
    assert structural_equal(chain.stages[0][1], a)


def test_chain_requires_two_stages(rng):
    a = build_gap_cnn(gap_cnn_params(rng), name="a")
    with pytest.raises(ValueError):
        ConversionChain(stages=(("only", a),))


def test_structural_equal_ignores_metadata(rng):
    a = build_smallcnn(smallcnn_params(rng))
    b = with_metadata(a, anything="else")
    assert structural_equal(a, b)
    params = smallcnn_params(np.random.default_rng(99))
    c = build_smallcnn(params)
    assert not structural_equal(a, c)
