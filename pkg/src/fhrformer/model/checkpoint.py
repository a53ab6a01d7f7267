"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"FHRF"                      magic
    uint32                       format version
    uint32 n, n bytes            model config as UTF-8 JSON
    uint32                       parameter count
    per parameter:
        uint32 n, n bytes        name (UTF-8)
        uint32                   rank
        rank x uint32            dims
        prod(dims) x float32     row-major values
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .config import ModelConfig
from .fhrformer import FHRFormer

MAGIC = b"FHRF"
VERSION = 1


def _write_blob(buf: io.BufferedIOBase, payload: bytes) -> None:
    buf.write(struct.pack("<I", len(payload)))
    buf.write(payload)


def encode_checkpoint(config: ModelConfig, params: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    _write_blob(buf, json.dumps(config.to_dict(), sort_keys=True).encode())
    buf.write(struct.pack("<I", len(params)))
    for name, value in params.items():
        value = np.ascontiguousarray(value, dtype="<f4")
        _write_blob(buf, name.encode())
        buf.write(struct.pack("<I", value.ndim))
        buf.write(struct.pack(f"<{value.ndim}I", *value.shape))
        buf.write(value.tobytes())
    return buf.getvalue()


def decode_checkpoint(payload: bytes) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    view = memoryview(payload)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise DataError("checkpoint is truncated")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    def u32() -> int:
        return struct.unpack("<I", take(4))[0]

    if bytes(take(4)) != MAGIC:
        raise DataError("not an FHRF checkpoint (bad magic)")
    version = u32()
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    config = ModelConfig.from_dict(json.loads(bytes(take(u32())).decode()))
    params: dict[str, np.ndarray] = {}
    for _ in range(u32()):
        name = bytes(take(u32())).decode()
        rank = u32()
        dims = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        count = int(np.prod(dims)) if dims else 1
        values = np.frombuffer(take(4 * count), dtype="<f4").reshape(dims)
        params[name] = values.astype(np.float32)
    if pos != len(view):
        raise DataError("trailing bytes after checkpoint payload")
    return config, params


def save_checkpoint(model: FHRFormer, path: str | Path) -> None:
    Path(path).write_bytes(encode_checkpoint(model.config, model.state_dict()))


def load_checkpoint(path: str | Path) -> FHRFormer:
    config, params = decode_checkpoint(Path(path).read_bytes())
    return FHRFormer(config, params)
