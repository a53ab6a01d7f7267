"""Named random sub-streams derived from one root seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, name, *keys)``; stable across runs and platforms."""
    entropy = [int(seed), zlib.crc32(name.encode())] + [int(k) for k in keys]
    return np.random.default_rng(entropy)
