"""RFGN checkpoint files.

Layout (little-endian)::

    b"RFGN"  version:u32  count:u32
    count x { name_len:u16  name:utf-8  rank:u8  dims:u32[rank]  dtype:u8  raw data }

dtype tags: 0 = float32, 1 = float64.
"""
from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"RFGN"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(ValueError):
    pass


def dumps(tensors: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype not in _TAGS:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF or arr.ndim > 0xFF:
            raise CheckpointError(f"{name}: name or rank too large")
        buf.write(struct.pack("<H", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        tag = _TAGS[arr.dtype]
        buf.write(struct.pack("<B", tag))
        buf.write(np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> dict[str, np.ndarray]:
    view = memoryview(blob)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("bad magic, not an RFGN checkpoint")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        if name in out:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        (tag,) = struct.unpack("<B", take(1))
        if tag not in _DTYPES:
            raise CheckpointError(f"{name}: unknown dtype tag {tag}")
        dtype = _DTYPES[tag]
        n = int(np.prod(dims, dtype=np.int64))
        arr = np.frombuffer(take(n * dtype.itemsize), dtype=dtype).reshape(dims)
        out[name] = arr.astype(dtype.newbyteorder("="))
    if pos != len(view):
        raise CheckpointError("trailing bytes after last tensor")
    return out


def save_checkpoint(path, tensors: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(tensors))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
