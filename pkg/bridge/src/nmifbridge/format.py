"""Writers for the neutral interchange formats.

Implemented from the format contract, not shared code: the analysis
tool and this bridge talk to each other only through these bytes.

Single tensor (`.nt`): magic ``NTNS``, u32 version (=1), u8 dtype code
(0 = F32, 1 = I64), u8 rank, rank u64 extents, row-major payload,
everything little-endian.

Model container: a directory with ``manifest.json`` (format_version 1,
name, layout, inputs/outputs, nodes in topological order, initializer
table) and ``tensors.bin`` (payloads at 64-byte-aligned offsets).
"""

import json
import struct
from pathlib import Path

import numpy as np

NT_MAGIC = b"NTNS"
NT_VERSION = 1
FORMAT_VERSION = 1
BLOB_ALIGNMENT = 64

_DTYPE_CODES = {"F32": 0, "I64": 1}
_NP_DTYPES = {"F32": np.dtype("<f4"), "I64": np.dtype("<i8")}


def _dtype_name(arr: np.ndarray) -> str:
    if arr.dtype == np.float32:
        return "F32"
    if arr.dtype == np.int64:
        return "I64"
    raise ValueError(f"no interchange dtype for {arr.dtype}")


def write_nt(path: str | Path, arr: np.ndarray) -> Path:
    path = Path(path)
    name = _dtype_name(arr)
    data = np.ascontiguousarray(arr, dtype=_NP_DTYPES[name])
    header = struct.pack("<4sIBB", NT_MAGIC, NT_VERSION,
                         _DTYPE_CODES[name], data.ndim)
    dims = b"".join(struct.pack("<Q", d) for d in data.shape)
    path.write_bytes(header + dims + data.tobytes())
    return path


def write_container(out_dir: str | Path, name: str, layout: str,
                    inputs: list[dict], outputs: list[dict],
                    nodes: list[dict],
                    initializers: dict[str, np.ndarray]) -> Path:
    """Write manifest.json + tensors.bin. Node dicts must already be in
    topological order with exactly the schema-required attrs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    blob = bytearray()
    table = []
    for init_name, arr in initializers.items():
        if len(blob) % BLOB_ALIGNMENT:
            blob.extend(b"\x00" * (BLOB_ALIGNMENT - len(blob) % BLOB_ALIGNMENT))
        dtype = _dtype_name(arr)
        payload = np.ascontiguousarray(arr, dtype=_NP_DTYPES[dtype]).tobytes()
        table.append({
            "name": init_name,
            "dtype": dtype,
            "shape": list(arr.shape),
            "offset": len(blob),
            "byte_length": len(payload),
        })
        blob.extend(payload)

    manifest = {
        "format_version": FORMAT_VERSION,
        "name": name,
        "layout": layout,
        "inputs": inputs,
        "outputs": outputs,
        "nodes": nodes,
        "initializers": table,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                       encoding="utf-8")
    (out / "tensors.bin").write_bytes(bytes(blob))
    return out


def value_info(name: str, shape) -> dict:
    return {"name": name, "dtype": "F32", "shape": [int(d) for d in shape]}
