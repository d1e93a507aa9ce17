import json

import numpy as np
import pytest
from PIL import Image

from convsurgeon.tensors import read_nt
from nmifbridge import DecodeFailure, PreprocessConfig, export_corpus


def _png(path, size=(64, 48), value=None, rng=None):
    if value is not None:
        pixels = np.full((size[1], size[0], 3), value, dtype=np.uint8)
    else:
        pixels = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    Image.fromarray(pixels).save(path)


def test_three_images_uniform_shape(tmp_path):
    rng = np.random.default_rng(3)
    src = tmp_path / "imgs"
    src.mkdir()
    for i, size in enumerate([(64, 48), (224, 224), (31, 77)]):
        _png(src / f"img_{i}.png", size=size, rng=rng)
    (src / "notes.txt").write_text("not an image")

    written = export_corpus(src, PreprocessConfig(size=224), tmp_path / "out")
    assert [p.name for p in written] == ["img_0.nt", "img_1.nt", "img_2.nt"]
    for p in written:
        tensor = read_nt(p)
        assert tensor.shape == (1, 3, 224, 224)


def test_corrupt_file_is_named(tmp_path):
    src = tmp_path / "imgs"
    src.mkdir()
    _png(src / "fine.png", rng=np.random.default_rng(0))
    (src / "broken.png").write_bytes(b"definitely not a png")
    with pytest.raises(DecodeFailure, match="broken.png"):
        export_corpus(src, PreprocessConfig(), tmp_path / "out")


def test_normalization_pixel_arithmetic(tmp_path):
    # 1x1 image, so resize is the identity and only arithmetic remains
    src = tmp_path / "imgs"
    src.mkdir()
    _png(src / "pixel.png", size=(1, 1), value=(200, 100, 50))
    config = PreprocessConfig(size=1, mean=(0.5, 0.4, 0.3), std=(0.25, 0.2,
                                                                 0.125))
    (out,) = export_corpus(src, config, tmp_path / "out")
    got = read_nt(out).array.reshape(3)
    want = (np.array([200, 100, 50], dtype=np.float32) / 255.0
            - np.array(config.mean, dtype=np.float32)) \
        / np.array(config.std, dtype=np.float32)
    assert np.allclose(got, want, atol=1e-6)


def test_manifest_records_preprocessing(tmp_path):
    src = tmp_path / "imgs"
    src.mkdir()
    _png(src / "a.png", rng=np.random.default_rng(1))
    config = PreprocessConfig(size=32, mean=(0.5, 0.5, 0.5), std=(0.5, 0.5, 0.5))
    export_corpus(src, config, tmp_path / "out")
    record = json.loads((tmp_path / "out" / "export_manifest.json").read_text())
    assert record["preprocess_config"] == {
        "size": 32, "mean": [0.5, 0.5, 0.5], "std": [0.5, 0.5, 0.5]}
    assert "resize to 32x32" in record["preprocessing"]
    assert record["images"] == ["a.nt"]
