"""Patch partitioning and random patch masking."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError


def patchify(signal: np.ndarray, patch_size: int) -> np.ndarray:
    """Split the last axis into non-overlapping patches: (..., L) -> (..., L // p, p)."""
    signal = np.asarray(signal)
    length = signal.shape[-1]
    if patch_size <= 0 or length % patch_size:
        raise ConfigError(f"length {length} is not divisible by patch size {patch_size}")
    return signal.reshape(*signal.shape[:-1], length // patch_size, patch_size)


def unpatchify(patches: np.ndarray) -> np.ndarray:
    patches = np.asarray(patches)
    return patches.reshape(*patches.shape[:-2], patches.shape[-2] * patches.shape[-1])


@dataclass(frozen=True)
class PatchLayout:
    """Patch-level mask ``m``: 0 marks a masked patch, 1 a visible one."""

    m: np.ndarray

    @property
    def n_patches(self) -> int:
        return int(self.m.shape[0])

    @property
    def masked(self) -> np.ndarray:
        return self.m == 0

    @property
    def masked_set(self) -> np.ndarray:
        return np.flatnonzero(self.m == 0)

    @property
    def visible_set(self) -> np.ndarray:
        return np.flatnonzero(self.m == 1)

    @classmethod
    def from_masked(cls, masked: np.ndarray) -> PatchLayout:
        return cls((~np.asarray(masked, dtype=bool)).astype(np.uint8))


def mask_count(gamma: float, n_eligible: int) -> int:
    """max(1, round(gamma * n)), rounding halves upward."""
    return max(1, int(math.floor(gamma * n_eligible + 0.5)))


def eligible_patches(n_patches: int, patch_size: int, pad_length: int = 0) -> np.ndarray:
    """Indices of patches that do not overlap the left padding."""
    first = -(-pad_length // patch_size)
    return np.arange(first, n_patches)


def sample_mask(
    n_patches: int,
    gamma: float,
    eligible: np.ndarray | None,
    rng: np.random.Generator,
) -> PatchLayout:
    if eligible is None:
        eligible = np.arange(n_patches)
    eligible = np.asarray(eligible, dtype=np.intp)
    if eligible.size == 0:
        raise DataError("no patch is eligible for masking")
    count = min(mask_count(gamma, eligible.size), eligible.size)
    chosen = rng.choice(eligible, size=count, replace=False)
    m = np.ones(n_patches, dtype=np.uint8)
    m[chosen] = 0
    return PatchLayout(m)


def stack_masked(layouts: list[PatchLayout]) -> np.ndarray:
    """Boolean (B, N) array, True where a patch is masked."""
    return np.stack([layout.masked for layout in layouts])
