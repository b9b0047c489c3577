"""Binary tensor container used for preprocessed tensors, heatmap exports and
checkpoint payloads.

Layout (all integers little-endian):

    offset  size  field
    0       4     magic b"CSTF"
    4       2     format version (currently 1)
    6       1     dtype code (0=float32, 1=float64, 2=int64, 3=uint8)
    7       1     reserved (0)
    8       4     ndim (uint32)
    12      8*n   shape, uint64 per dimension
    ...           payload, row-major (C order)
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import CorruptCheckpoint

MAGIC = b"CSTF"
VERSION = 1

_DTYPES = {
    0: np.dtype("<f4"),
    1: np.dtype("<f8"),
    2: np.dtype("<i8"),
    3: np.dtype("u1"),
}
_CODES = {v: k for k, v in _DTYPES.items()}


def _dtype_code(dtype: np.dtype) -> int:
    key = np.dtype(dtype).newbyteorder("<") if np.dtype(dtype).itemsize > 1 else np.dtype(dtype)
    try:
        return _CODES[key]
    except KeyError:
        raise ValueError(f"unsupported tensor dtype {dtype}") from None


def write_tensor_bytes(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if not array.flags["C_CONTIGUOUS"]:
        array = np.ascontiguousarray(array)  # keeps ndim: 0-d arrays are contiguous
    code = _dtype_code(array.dtype)
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<HBB", VERSION, code, 0))
    out.write(struct.pack("<I", array.ndim))
    out.write(struct.pack(f"<{array.ndim}Q", *array.shape))
    out.write(array.astype(_DTYPES[code], copy=False).tobytes(order="C"))
    return out.getvalue()


def read_tensor_bytes(raw: bytes) -> np.ndarray:
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CorruptCheckpoint("tensor container: bad magic")
    version, code, _ = struct.unpack("<HBB", raw[4:8])
    if version != VERSION:
        raise CorruptCheckpoint(f"tensor container: unsupported version {version}")
    if code not in _DTYPES:
        raise CorruptCheckpoint(f"tensor container: unknown dtype code {code}")
    (ndim,) = struct.unpack("<I", raw[8:12])
    header_end = 12 + 8 * ndim
    if len(raw) < header_end:
        raise CorruptCheckpoint("tensor container: truncated shape header")
    shape = struct.unpack(f"<{ndim}Q", raw[12:header_end])
    dtype = _DTYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = raw[header_end:]
    if len(payload) != expected:
        raise CorruptCheckpoint(
            f"tensor container: payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def write_tensor(path: str | Path | BinaryIO, array: np.ndarray) -> None:
    data = write_tensor_bytes(array)
    if hasattr(path, "write"):
        path.write(data)  # type: ignore[union-attr]
    else:
        Path(path).write_bytes(data)


def read_tensor(path: str | Path | BinaryIO) -> np.ndarray:
    if hasattr(path, "read"):
        raw = path.read()  # type: ignore[union-attr]
    else:
        raw = Path(path).read_bytes()
    return read_tensor_bytes(raw)
