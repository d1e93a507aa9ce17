"""Image directory to `.nt` tensor corpus.

One tensor per image, all shaped [1, 3, size, size] NCHW float32:
decode as RGB, bilinear-resize to size x size, scale to [0, 1], then
per-channel (x - mean) / std. The preprocessing is recorded verbatim
in the corpus export_manifest.json so a run can be reproduced from the
manifest alone.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeFailure
from .export import write_export_manifest
from .format import write_nt

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".gif")


@dataclass(frozen=True)
class PreprocessConfig:
    size: int = 224
    mean: tuple[float, float, float] = (0.485, 0.456, 0.406)
    std: tuple[float, float, float] = (0.229, 0.224, 0.225)

    def describe(self) -> str:
        return (f"RGB, bilinear resize to {self.size}x{self.size}, "
                f"scale 1/255, normalize mean={list(self.mean)} "
                f"std={list(self.std)}, layout NCHW")


def _decode(path: Path, config: PreprocessConfig) -> np.ndarray:
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize((config.size, config.size),
                                            Image.BILINEAR)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeFailure(str(path), str(exc)) from exc
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    mean = np.asarray(config.mean, dtype=np.float32)
    std = np.asarray(config.std, dtype=np.float32)
    arr = (arr - mean) / std
    return np.ascontiguousarray(arr.transpose(2, 0, 1)[None], dtype=np.float32)


def export_corpus(image_dir: str | Path, config: PreprocessConfig,
                  out_dir: str | Path) -> list[Path]:
    """Write one `.nt` per decodable image (sorted by filename) plus the
    preprocessing manifest; raises DecodeFailure naming the first
    undecodable file."""
    image_dir = Path(image_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    written = []
    for path in sorted(image_dir.iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        tensor = _decode(path, config)
        written.append(write_nt(out / f"{path.stem}.nt", tensor))

    manifest = write_export_manifest(out, model_id=f"corpus:{image_dir.name}",
                                     preprocessing=config.describe())
    # keep the machine-readable config next to the prose description
    record = json.loads(manifest.read_text(encoding="utf-8"))
    record["preprocess_config"] = asdict(config)
    record["images"] = [p.name for p in written]
    manifest.write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    return written
