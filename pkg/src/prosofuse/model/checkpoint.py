"""PSFZ1 tensor container.

Layout, little-endian: b"PSFZ1", u32 tensor count, then per tensor a u16
name length, the UTF-8 name, u8 ndims, u32 per dim and float32 data; a u32
config hash closes the file.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptionError, DimensionError, FormatError, MismatchError
from ..numcore import Module

MAGIC = b"PSFZ1"


def encode_checkpoint(tensors: dict[str, np.ndarray], config_hash: int) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise FormatError(f"tensor {name!r} does not fit the header fields")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    parts.append(struct.pack("<I", config_hash & 0xFFFFFFFF))
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CorruptionError(f"checkpoint truncated at byte {self.pos} (wanted {n} more)")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct("<" + fmt)
        return s.unpack(self.take(s.size))


def decode_checkpoint(blob: bytes) -> tuple[dict[str, np.ndarray], int]:
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError("not a PSFZ1 checkpoint (bad magic)")
    r = _Reader(blob)
    r.take(len(MAGIC))
    (count,) = r.unpack("I")
    tensors = {}
    for _ in range(count):
        (n,) = r.unpack("H")
        try:
            name = r.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptionError(f"tensor name is not UTF-8: {exc}") from None
        (ndim,) = r.unpack("B")
        shape = r.unpack(f"{ndim}I")
        size = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
        if name in tensors:
            raise CorruptionError(f"duplicate tensor {name!r}")
        tensors[name] = data
    (config_hash,) = r.unpack("I")
    if r.pos != len(blob):
        raise CorruptionError(f"{len(blob) - r.pos} trailing bytes after checkpoint")
    return tensors, config_hash


def save_checkpoint_file(path, tensors: dict[str, np.ndarray], config_hash: int) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(tensors, config_hash))
    os.replace(tmp, path)


def load_checkpoint_file(path, expected_hash: int | None = None) -> dict[str, np.ndarray]:
    tensors, found = decode_checkpoint(Path(path).read_bytes())
    if expected_hash is not None and found != expected_hash & 0xFFFFFFFF:
        raise MismatchError(f"checkpoint config hash {found:08x} does not match {expected_hash & 0xFFFFFFFF:08x}")
    return tensors


def module_tensors(module: Module, prefix: str = "param.") -> dict[str, np.ndarray]:
    return {prefix + name: p.value for name, p in module.named_params()}


def load_module_tensors(module: Module, tensors: dict[str, np.ndarray], prefix: str = "param.") -> None:
    """Copy tensors into the module's params; names and shapes must match exactly."""
    params = module.params()
    found = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
    missing = sorted(set(params) - set(found))
    extra = sorted(set(found) - set(params))
    if missing or extra:
        raise MismatchError(f"checkpoint params differ: missing {missing[:5]}, unexpected {extra[:5]}")
    for name, p in params.items():
        if found[name].shape != p.value.shape:
            raise DimensionError(f"{name}: checkpoint shape {found[name].shape}, model {p.value.shape}")
        p.value[...] = found[name]
