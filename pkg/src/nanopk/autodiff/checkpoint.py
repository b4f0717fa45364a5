"""Flat named-tensor file format.

Layout (all integers little-endian)::

    b"NPKTENS1"                       8-byte magic
    uint32 meta_len, meta_len bytes   UTF-8 JSON metadata object
    uint32 count
    count x {
        uint16 name_len, name bytes   UTF-8 tensor name
        uint8  ndim
        ndim x uint64                 shape
        prod(shape) x float64         values, C order
    }

Nothing may follow the last tensor.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import BadCheckpoint

MAGIC = b"NPKTENS1"


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", len(meta_bytes)), meta_bytes, struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        arr = np.asarray(value, dtype="<f8", order="C")
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise BadCheckpoint("checkpoint is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise BadCheckpoint(f"cannot read checkpoint {path}: {exc}") from exc
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise BadCheckpoint(f"{path}: not a named-tensor checkpoint")
    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadCheckpoint(f"{path}: corrupt metadata") from exc
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        try:
            name = r.take(name_len).decode()
        except UnicodeDecodeError as exc:
            raise BadCheckpoint(f"{path}: corrupt tensor name") from exc
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q")
        n = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64)
        if not np.all(np.isfinite(values)):
            raise BadCheckpoint(f"{path}: tensor {name!r} has non-finite values")
        tensors[name] = values.reshape(shape)
    if r.pos != len(data):
        raise BadCheckpoint(f"{path}: trailing bytes after last tensor")
    return tensors, meta
