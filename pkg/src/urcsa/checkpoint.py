"""Binary checkpoint format for named parameter arrays.

Layout (all integers little-endian):

    magic   4 bytes  b"URSA"
    version u32      currently 1
    cfg_len u32      length of the UTF-8 config text
    cfg     bytes    key=value lines describing what the parameters belong to
    cfg_sha 32 bytes sha256 of the config text, verified on load
    count   u32      number of parameters
    per parameter:
        name_len u16, name bytes (UTF-8)
        ndim u8, dims u32 * ndim
        data: float32 little-endian raw values (row-major)

Values are stored as float32, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .errors import (
    CheckpointFormatError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)

MAGIC = b"URSA"
VERSION = 1


def save_checkpoint(path, config_text: str, params) -> None:
    """Write named parameters plus a config header; floats stored as f32 LE."""
    cfg = config_text.encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(cfg)), cfg,
              hashlib.sha256(cfg).digest()]
    params = list(params)
    chunks.append(struct.pack("<I", len(params)))
    for p in params:
        name = p.name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<B", p.data.ndim))
        chunks.append(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
        chunks.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointTruncatedError(
                f"checkpoint ends at byte {len(self.blob)}, needed {self.pos + n}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]


def load_checkpoint(path):
    """Read a checkpoint; returns (config_text, {name: float32 array})."""
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CheckpointFormatError("bad magic bytes, not a checkpoint file")
    version = r.u32()
    if version != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}")
    cfg = r.take(r.u32())
    if r.take(32) != hashlib.sha256(cfg).digest():
        raise CheckpointFormatError("config hash mismatch, file is corrupted")
    count = r.u32()
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        ndim = r.u8()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape)
        arrays[name] = np.ascontiguousarray(data)
    if r.pos != len(blob):
        raise CheckpointFormatError(f"{len(blob) - r.pos} trailing bytes after payload")
    return cfg.decode("utf-8"), arrays
