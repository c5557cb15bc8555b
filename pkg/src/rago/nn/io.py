"""Binary weight files.

Layout (little-endian)::

    b"RAGOW1"
    u32 metadata length, UTF-8 JSON metadata
    u32 parameter count
    per parameter, sorted by path:
        u16 path length, UTF-8 path
        u8 ndim, u32 dims...
        float64 values (C order)
"""

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptFile, VersionMismatch
from .layers import ModelWeights
from .value import parameter

MAGIC = b"RAGOW1"


def dumps_weights(weights, metadata=None):
    meta = json.dumps(metadata or {}, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", len(meta)), meta, struct.pack("<I", len(weights))]
    for path, p in weights.sorted_items():
        name = path.encode()
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<B", p.data.ndim))
        parts.append(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
        parts.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    return b"".join(parts)


def save_weights(weights, path, metadata=None):
    Path(path).write_bytes(dumps_weights(weights, metadata))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CorruptFile(f"file truncated at byte {self.pos} (wanted {n} more)")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads_weights(buf):
    """Parse a weight file into ``(ModelWeights, metadata)``."""
    if buf[: len(MAGIC)] != MAGIC:
        raise VersionMismatch(f"bad magic {bytes(buf[:len(MAGIC)])!r}, expected {MAGIC!r}")
    rd = _Reader(buf)
    rd.take(len(MAGIC))
    (meta_len,) = rd.unpack("<I")
    try:
        metadata = json.loads(rd.take(meta_len).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"unreadable metadata: {exc}") from None
    (count,) = rd.unpack("<I")
    weights = ModelWeights()
    for _ in range(count):
        (name_len,) = rd.unpack("<H")
        try:
            name = rd.take(name_len).decode()
        except UnicodeDecodeError:
            raise CorruptFile("parameter path is not UTF-8") from None
        (ndim,) = rd.unpack("<B")
        shape = rd.unpack(f"<{ndim}I")
        n = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(rd.take(8 * n), dtype="<f8").astype(float).reshape(shape)
        weights[name] = parameter(data)
    if rd.pos != len(buf):
        raise CorruptFile(f"{len(buf) - rd.pos} trailing bytes")
    return weights, metadata


def load_weights(path, with_metadata=False):
    weights, metadata = loads_weights(Path(path).read_bytes())
    return (weights, metadata) if with_metadata else weights
