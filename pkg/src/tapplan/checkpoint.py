"""Binary checkpoint format for world models.

Layout (all integers little-endian)::

    b"TAPW"  u32 version  u32 meta_len  meta (UTF-8 JSON)
    u32 n_sections
    per section: u16 name_len, name (UTF-8), u8 ndim, u32 * ndim shape,
                 float64 * prod(shape) data, u32 crc32(name + shape + data)
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from tapplan.errors import ParseError, VersionError
from tapplan.world_model import ModelConfig, WorldModel

MAGIC = b"TAPW"
VERSION = 1


def encode_checkpoint(model: WorldModel) -> bytes:
    meta = json.dumps({"model_config": asdict(model.config), "meta": model.meta}, sort_keys=True).encode("utf-8")
    out = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta, struct.pack("<I", len(model.params))]
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype="<f8")
        nb = name.encode("utf-8")
        head = struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        body = arr.tobytes()
        out += [head, body, struct.pack("<I", zlib.crc32(head + body))]
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise ParseError(f"truncated checkpoint while reading {what}", offset=self.pos)
        chunk = self.buf[self.pos: self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(buf: bytes) -> WorldModel:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise ParseError("not a TAPW checkpoint", offset=0)
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise VersionError(f"checkpoint format version {version}, expected {VERSION}")
    (meta_len,) = r.unpack("<I", "metadata length")
    meta_at = r.pos
    try:
        meta = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
        config = ModelConfig(**meta["model_config"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(f"bad metadata block: {exc}", offset=meta_at) from exc
    (n_sections,) = r.unpack("<I", "section count")
    params = {}
    for _ in range(n_sections):
        start = r.pos
        (name_len,) = r.unpack("<H", "section name length")
        name = r.take(name_len, "section name").decode("utf-8", errors="replace")
        (ndim,) = r.unpack("<B", "section rank")
        shape = r.unpack(f"<{ndim}I", f"shape of {name}")
        count = int(np.prod(shape)) if ndim else 1
        body = r.take(8 * count, f"data of {name}")
        head = buf[start: r.pos - len(body)]
        (crc,) = r.unpack("<I", f"crc of {name}")
        if crc != zlib.crc32(head + body):
            raise ParseError(f"CRC mismatch in section {name!r}", offset=start)
        params[name] = np.frombuffer(body, dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(buf):
        raise ParseError("trailing bytes after last section", offset=r.pos)
    return WorldModel(config, params, meta.get("meta", {}))


def save_checkpoint(model: WorldModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(model))


def load_checkpoint(path: str | Path) -> WorldModel:
    return decode_checkpoint(Path(path).read_bytes())
