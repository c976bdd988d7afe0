"""Binary template file format (.mbt).

Little-endian layout, version 1:

    magic   4 bytes  'MBT1'
    version u16      = 1
    ppi     u16
    count   u16      number of minutiae
    dim     u16      descriptor dimension
    per minutia: x f32, y f32, theta f32, kind u8 (0 ending / 1 bifurcation),
                 quality f32, descriptor dim x f32
    crc32   u32      of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import StoreCorruptError
from .matcher import Template

MAGIC = b"MBT1"
VERSION = 1

_HEADER = struct.Struct("<4sHHHH")
_MINUTIA_FIXED = struct.Struct("<fffBf")


def template_to_bytes(t: Template) -> bytes:
    dim = t.descriptors.shape[1]
    buf = bytearray(_HEADER.pack(MAGIC, VERSION, int(t.source_ppi), len(t), dim))
    for i in range(len(t)):
        buf += _MINUTIA_FIXED.pack(
            float(t.xy[i, 0]),
            float(t.xy[i, 1]),
            float(t.theta[i]),
            int(t.kinds[i]),
            float(t.quality[i]),
        )
        buf += np.ascontiguousarray(t.descriptors[i], dtype="<f4").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    return bytes(buf)


def template_from_bytes(raw: bytes, source: str = "<bytes>") -> Template:
    if len(raw) < _HEADER.size + 4:
        raise StoreCorruptError(f"{source}: truncated template file")
    body, (crc_stored,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise StoreCorruptError(f"{source}: CRC mismatch, file is corrupt")
    magic, version, ppi, count, dim = _HEADER.unpack_from(body, 0)
    if magic != MAGIC:
        raise StoreCorruptError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise StoreCorruptError(f"{source}: unsupported version {version}")
    rec = _MINUTIA_FIXED.size + 4 * dim
    expected = _HEADER.size + count * rec
    if len(body) != expected:
        raise StoreCorruptError(
            f"{source}: payload length {len(body)} != expected {expected}"
        )
    xy = np.empty((count, 2), dtype=np.float32)
    theta = np.empty(count, dtype=np.float32)
    kinds = np.empty(count, dtype=np.uint8)
    quality = np.empty(count, dtype=np.float32)
    desc = np.empty((count, dim), dtype=np.float32)
    off = _HEADER.size
    for i in range(count):
        x, y, th, kind, q = _MINUTIA_FIXED.unpack_from(body, off)
        off += _MINUTIA_FIXED.size
        xy[i] = (x, y)
        theta[i] = th
        kinds[i] = kind
        quality[i] = q
        desc[i] = np.frombuffer(body, dtype="<f4", count=dim, offset=off)
        off += 4 * dim
    return Template(xy, theta, kinds, quality, desc, source_ppi=int(ppi))


def save_template(t: Template, path: str | Path) -> None:
    Path(path).write_bytes(template_to_bytes(t))


def load_template(path: str | Path) -> Template:
    return template_from_bytes(Path(path).read_bytes(), source=str(path))
