"""MAT1 container: b"MAT1", u32 rows, u32 cols, rows*cols float32, all little-endian."""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptionError, DimensionError, FormatError

MAGIC = b"MAT1"
_HEADER = struct.Struct("<4sII")


def encode_matrix(m) -> bytes:
    m = np.asarray(m)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise DimensionError(f"MAT1 stores 2-D matrices, got shape {m.shape}")
    rows, cols = m.shape
    return _HEADER.pack(MAGIC, rows, cols) + np.ascontiguousarray(m, dtype="<f4").tobytes()


def decode_matrix(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise CorruptionError(f"MAT1 blob too short ({len(blob)} bytes)")
    magic, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    expected = _HEADER.size + 4 * rows * cols
    if len(blob) != expected:
        raise CorruptionError(f"expected {expected} bytes for {rows}x{cols}, found {len(blob)}")
    return np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(rows, cols).astype(np.float32)


def save_matrix(path, m) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_matrix(m))
    os.replace(tmp, path)


def load_matrix(path) -> np.ndarray:
    return decode_matrix(Path(path).read_bytes())
