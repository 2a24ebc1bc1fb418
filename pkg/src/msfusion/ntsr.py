"""NTSR1 binary tensor files.

Layout: magic ``NTSR1\\0``, u32-LE ndim (always 4), four u32-LE extents
(B, C, H, W), one u8 dtype tag (0 = f32, 1 = f64), then row-major
little-endian scalar data.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"NTSR1\x00"
_DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAG_FOR = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def save_tensor(path, t: Tensor) -> None:
    if t.ndim != 4:
        raise ValueError(f"NTSR1 stores 4-d tensors, got shape {t.shape}")
    header = MAGIC + struct.pack("<I", 4) + struct.pack("<4I", *t.shape)
    header += struct.pack("<B", _TAG_FOR[t.dtype])
    payload = np.ascontiguousarray(t.data, dtype=t.dtype.newbyteorder("<")).tobytes()
    Path(path).write_bytes(header + payload)


def load_tensor(path) -> Tensor:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) or raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: bad magic, not an NTSR1 file")
    off = len(MAGIC)
    if len(raw) < off + 4 * 5 + 1:
        raise ValueError(f"{path}: truncated header")
    (ndim,) = struct.unpack_from("<I", raw, off)
    off += 4
    if ndim != 4:
        raise ValueError(f"{path}: ndim must be 4, got {ndim}")
    shape = struct.unpack_from("<4I", raw, off)
    off += 16
    (tag,) = struct.unpack_from("<B", raw, off)
    off += 1
    if tag not in _DTYPE_TAGS:
        raise ValueError(f"{path}: unknown dtype tag {tag}")
    if any(e < 1 for e in shape):
        raise ValueError(f"{path}: all extents must be >= 1, got {shape}")
    dtype = _DTYPE_TAGS[tag]
    count = shape[0] * shape[1] * shape[2] * shape[3]
    expected = count * dtype.itemsize
    data = raw[off:]
    if len(data) != expected:
        raise ValueError(
            f"{path}: expected {expected} data bytes for shape {shape}, found {len(data)}"
        )
    arr = np.frombuffer(data, dtype=dtype).reshape(shape)
    return Tensor(arr.astype(arr.dtype.newbyteorder("="), copy=True))
