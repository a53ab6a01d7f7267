from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DataError
from ..model import FHRFormer, patchify
from ..numerics import no_grad
from ..prep import PreparedSignal


def inpaint_targets(signal: PreparedSignal) -> np.ndarray:
    """Samples to fill: unobserved and not part of the left padding."""
    targets = signal.missing_mask == 0
    targets[: signal.pad_length] = False
    return targets


def inpaint(model: FHRFormer, signal: PreparedSignal) -> PreparedSignal:
    """Replace unobserved samples with model reconstructions.

    A patch is hidden from the encoder when it holds at least one target
    sample, but only the target samples themselves are overwritten, so
    observed values inside partially-missing patches survive unchanged.
    """
    p = model.config.patch_size
    if signal.length % p:
        raise ConfigError(f"signal length {signal.length} is not divisible by patch size {p}")
    targets = inpaint_targets(signal)
    out = signal.values.copy()
    if not targets.any():
        return PreparedSignal(out, signal.missing_mask.copy(), signal.episode_id)
    masked = patchify(targets, p).any(axis=-1)
    if masked.all():
        raise DataError(f"episode {signal.episode_id!r}: every patch is missing, no context to inpaint from")
    with no_grad():
        result = model.forward(signal.values[None, :], masked[None, :], training=False)
    predicted = result.predictions.data[0].reshape(-1)
    out[targets] = predicted[targets]
    return PreparedSignal(out, signal.missing_mask.copy(), signal.episode_id)
