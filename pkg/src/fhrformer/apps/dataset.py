"""Binary dataset container and episode-level splitting.

File layout (little-endian)::

    b"FHRD"            magic
    uint16             format version
    uint32             signal length L
    uint32             record count
    16 bytes           split tag, ASCII, NUL padded
    per record (fixed size 5L + 32 bytes):
        L x float32    normalized values
        L x uint8      missing mask (1 = observed)
        32 bytes       episode id, UTF-8, NUL padded
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DataError
from ..prep import DopplerConfig, PreparedSignal, RawRecord, prepare
from ..rng import substream

MAGIC = b"FHRD"
VERSION = 1
_HEADER = struct.Struct("<4sHII16s")
ID_BYTES = 32
DEFAULT_RATIOS = (4486 / 5225, 369 / 5225, 370 / 5225)
SPLITS = ("train", "val", "test")


@dataclass
class DatasetContainer:
    length: int
    split: str = ""
    records: list[PreparedSignal] = field(default_factory=list)
    version: int = VERSION

    def __len__(self) -> int:
        return len(self.records)

    @property
    def episode_ids(self) -> list[str]:
        return [r.episode_id for r in self.records]

    def values(self) -> np.ndarray:
        return np.stack([r.values for r in self.records])

    def to_bytes(self) -> bytes:
        split = self.split.encode("ascii")
        if len(split) > 16:
            raise DataError(f"split tag {self.split!r} longer than 16 bytes")
        parts = [_HEADER.pack(MAGIC, self.version, self.length, len(self.records), split)]
        for rec in self.records:
            if rec.length != self.length:
                raise DataError(f"record {rec.episode_id!r} has length {rec.length} != {self.length}")
            ident = rec.episode_id.encode()
            if len(ident) > ID_BYTES:
                raise DataError(f"episode id {rec.episode_id!r} longer than {ID_BYTES} bytes")
            parts.append(np.ascontiguousarray(rec.values, dtype="<f4").tobytes())
            parts.append(np.ascontiguousarray(rec.missing_mask, dtype=np.uint8).tobytes())
            parts.append(ident.ljust(ID_BYTES, b"\0"))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, payload: bytes) -> DatasetContainer:
        if len(payload) < _HEADER.size:
            raise DataError("dataset file is truncated")
        magic, version, length, count, split = _HEADER.unpack_from(payload)
        if magic != MAGIC:
            raise DataError("not an FHRD dataset (bad magic)")
        if version != VERSION:
            raise DataError(f"unsupported dataset version {version}")
        rec_size = 5 * length + ID_BYTES
        if len(payload) != _HEADER.size + count * rec_size:
            raise DataError("dataset size does not match its header")
        records = []
        pos = _HEADER.size
        for _ in range(count):
            values = np.frombuffer(payload, dtype="<f4", count=length, offset=pos)
            mask = np.frombuffer(payload, dtype=np.uint8, count=length, offset=pos + 4 * length)
            ident = payload[pos + 5 * length:pos + rec_size].rstrip(b"\0").decode()
            records.append(PreparedSignal(values.astype(np.float32), mask.copy(), ident))
            pos += rec_size
        return cls(length, split.rstrip(b"\0").decode("ascii"), records, version)


def write_dataset(container: DatasetContainer, path: str | Path) -> None:
    Path(path).write_bytes(container.to_bytes())


def read_dataset(path: str | Path) -> DatasetContainer:
    return DatasetContainer.from_bytes(Path(path).read_bytes())


def split_counts(count: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ConfigError(f"split ratios must be three non-negative numbers, got {ratios}")
    total = float(sum(ratios))
    n_val = int(round(count * ratios[1] / total))
    n_test = int(round(count * ratios[2] / total))
    n_train = count - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ConfigError(f"{count} episodes at ratios {ratios} leave an empty split")
    return n_train, n_val, n_test


def build_dataset(
    raw: Sequence[RawRecord],
    ratios: Sequence[float] = DEFAULT_RATIOS,
    length: int = 7200,
    seed: int = 0,
    doppler: DopplerConfig | None = None,
) -> dict[str, DatasetContainer]:
    """Prepare every record and split by episode into train/val/test containers."""
    if len(raw) < 3:
        raise ConfigError("need at least three episodes to build train/val/test splits")
    ids = [r.episode_id for r in raw]
    if len(set(ids)) != len(ids):
        raise DataError("episode ids must be unique")
    counts = split_counts(len(raw), ratios)
    order = substream(seed, "split").permutation(len(raw))
    prepared = [prepare(r, length, doppler) for r in raw]
    out = {}
    start = 0
    for name, n in zip(SPLITS, counts):
        members = sorted(order[start:start + n])
        out[name] = DatasetContainer(length, name, [prepared[i] for i in members])
        start += n
    return out
