"""Dense tensors and the single-tensor ``.nt`` file format.

A ``.nt`` file is: magic ``NTNS``, u32 version (=1), u8 dtype code
(0 = F32, 1 = I64), u8 rank, ``rank`` u64 extents, then the row-major
payload. Everything is little-endian. F32 payloads are IEEE-754 binary32;
I64 payloads are two's-complement 64-bit.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BlobOutOfBounds,
    IoFailure,
    MagicMismatch,
    NonFiniteTensor,
    VersionUnsupported,
)

NT_MAGIC = b"NTNS"
NT_VERSION = 1


class DType(enum.Enum):
    F32 = "F32"
    I64 = "I64"

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype("<f4") if self is DType.F32 else np.dtype("<i8")

    @property
    def code(self) -> int:
        return 0 if self is DType.F32 else 1

    @property
    def itemsize(self) -> int:
        return self.np_dtype.itemsize

    @classmethod
    def from_code(cls, code: int) -> "DType":
        try:
            return {0: cls.F32, 1: cls.I64}[code]
        except KeyError:
            raise VersionUnsupported(f"unknown dtype code {code}") from None

    @classmethod
    def from_name(cls, name: str) -> "DType":
        try:
            return cls[name]
        except KeyError:
            raise VersionUnsupported(f"unknown dtype name {name!r}") from None


@dataclass(frozen=True)
class TensorData:
    """A dense tensor: dtype, shape, and a row-major element buffer.

    ``array`` is kept C-contiguous with the dtype's exact numpy type, so
    ``array.tobytes()`` is the canonical byte payload. Instances are treated
    as immutable; every transformation returns a new ``TensorData``.
    """

    dtype: DType
    shape: tuple[int, ...]
    array: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = math.prod(self.shape) if self.shape else 1
        if self.array.size != expected:
            raise ValueError(
                f"shape {self.shape} implies {expected} elements, "
                f"buffer has {self.array.size}"
            )

    @classmethod
    def from_array(cls, values, dtype: DType | None = None) -> "TensorData":
        arr = np.asarray(values)
        if dtype is None:
            dtype = DType.I64 if arr.dtype.kind in "iu" else DType.F32
        arr = arr.astype(dtype.np_dtype, copy=False)
        if not arr.flags["C_CONTIGUOUS"]:
            # ascontiguousarray would promote 0-d to 1-d; 0-d is always contiguous
            arr = np.ascontiguousarray(arr)
        return cls(dtype=dtype, shape=tuple(int(d) for d in arr.shape), array=arr)

    @property
    def rank(self) -> int:
        return len(self.shape)

    @property
    def numel(self) -> int:
        return int(self.array.size)

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the element buffer."""
        return self.array.reshape(-1)

    def tobytes(self) -> bytes:
        return self.array.tobytes()

    def bit_equal(self, other: "TensorData") -> bool:
        return (
            self.dtype is other.dtype
            and self.shape == other.shape
            and self.tobytes() == other.tobytes()
        )

    def is_finite(self) -> bool:
        if self.dtype is DType.I64:
            return True
        return bool(np.isfinite(self.array).all())


def write_nt(path: str | Path, tensor: TensorData) -> None:
    """Write one tensor in the ``.nt`` format."""
    path = Path(path)
    header = struct.pack(
        f"<4sIBB{tensor.rank}Q",
        NT_MAGIC,
        NT_VERSION,
        tensor.dtype.code,
        tensor.rank,
        *tensor.shape,
    )
    try:
        path.write_bytes(header + tensor.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_nt(path: str | Path, allow_non_finite: bool = False) -> TensorData:
    """Read one ``.nt`` tensor, checking magic, version, and payload size."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(raw) < 10 or raw[:4] != NT_MAGIC:
        raise MagicMismatch(f"{path}: not an NT tensor file")
    version, dtype_code, rank = struct.unpack_from("<IBB", raw, 4)
    if version != NT_VERSION:
        raise VersionUnsupported(f"{path}: NT version {version}")
    dtype = DType.from_code(dtype_code)
    dims_end = 10 + 8 * rank
    if len(raw) < dims_end:
        raise BlobOutOfBounds(f"{path}: truncated dimension table")
    shape = struct.unpack_from(f"<{rank}Q", raw, 10) if rank else ()
    shape = tuple(int(d) for d in shape)
    count = math.prod(shape) if shape else 1
    payload = raw[dims_end:]
    if len(payload) != count * dtype.itemsize:
        raise BlobOutOfBounds(
            f"{path}: payload is {len(payload)} bytes, "
            f"expected {count * dtype.itemsize}"
        )
    arr = np.frombuffer(payload, dtype=dtype.np_dtype).reshape(shape).copy()
    tensor = TensorData(dtype=dtype, shape=shape, array=arr)
    if not allow_non_finite and not tensor.is_finite():
        raise NonFiniteTensor(f"{path}: non-finite F32 values (pass allow_non_finite to accept)")
    return tensor
