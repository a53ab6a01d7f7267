"""Recursive forecasting with Monte-Carlo dropout bands."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, ParameterError
from ..model import FHRFormer
from ..numerics import no_grad
from ..rng import substream

Z_95 = 1.96


@dataclass
class ForecastResult:
    context_len: int
    step: int
    horizon: int
    mean: np.ndarray
    lower95: np.ndarray
    upper95: np.ndarray
    iterations: int


def _check(model: FHRFormer, n_context: int, horizon: int, step: int, context_len: int, origin: int) -> None:
    p = model.config.patch_size
    if context_len <= 0 or context_len % p:
        raise ParameterError(f"context length {context_len} must be a positive multiple of patch size {p}")
    if step <= 0 or step % p:
        raise ParameterError(f"step {step} must be a positive multiple of patch size {p}")
    if horizon <= 0 or horizon % step:
        raise ParameterError(f"horizon {horizon} must be a positive multiple of step {step}")
    if origin % p:
        raise ParameterError(f"origin {origin} must be a multiple of patch size {p}")
    if n_context < context_len:
        raise DataError(f"context has {n_context} samples, {context_len} required")


def recursive_forecast(
    model: FHRFormer,
    contexts: np.ndarray,
    horizon: int,
    step: int = 30,
    context_len: int = 3600,
    origin: int = 0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, int]:
    """Forecast ``horizon`` samples for each row of ``contexts`` (B, n).

    Each iteration takes the latest ``context_len`` samples, appends
    ``step // p`` masked patches at the next absolute patch positions, and
    adopts the predictions for those patches.  ``origin`` is the absolute
    sample index of ``contexts[:, 0]``.  Returns (predictions (B, horizon),
    iteration count).
    """
    contexts = np.atleast_2d(np.asarray(contexts, dtype=model.dtype))
    _check(model, contexts.shape[1], horizon, step, context_len, origin)
    p = model.config.patch_size
    n_ctx, n_new = context_len // p, step // p
    masked = np.zeros((contexts.shape[0], n_ctx + n_new), dtype=bool)
    masked[:, n_ctx:] = True
    series = contexts
    iterations = 0
    with no_grad():
        for _ in range(horizon // step):
            window = series[:, -context_len:]
            first_patch = (origin + series.shape[1] - context_len) // p
            positions = first_patch + np.arange(n_ctx + n_new)
            inputs = np.concatenate([window, np.zeros((window.shape[0], step), dtype=window.dtype)], axis=1)
            result = model.forward(inputs, masked, positions=positions, training=training, rng=rng)
            predicted = result.predictions.data[:, n_ctx:].reshape(window.shape[0], step)
            series = np.concatenate([series, predicted], axis=1)
            iterations += 1
    return series[:, contexts.shape[1]:], iterations


def forecast(
    model: FHRFormer,
    context: np.ndarray,
    horizon: int,
    step: int = 30,
    context_len: int = 3600,
    origin: int = 0,
) -> ForecastResult:
    """Deterministic (dropout-off) recursive forecast; bounds equal the mean."""
    mean, iterations = recursive_forecast(model, context, horizon, step, context_len, origin)
    mean = mean[0]
    return ForecastResult(context_len, step, horizon, mean, mean.copy(), mean.copy(), iterations)


def forecast_interval(
    model: FHRFormer,
    context: np.ndarray,
    horizon: int,
    step: int = 30,
    context_len: int = 3600,
    origin: int = 0,
    passes: int = 50,
    seed: int = 0,
) -> ForecastResult:
    """Deterministic forecast with a mean +/- 1.96 std band from dropout-active passes."""
    if passes < 2:
        raise ParameterError(f"need at least 2 stochastic passes, got {passes}")
    result = forecast(model, context, horizon, step, context_len, origin)
    if model.config.dropout == 0.0:
        return result
    context = np.asarray(context).reshape(1, -1)
    samples, _ = recursive_forecast(
        model, np.repeat(context, passes, axis=0), horizon, step, context_len, origin,
        training=True, rng=substream(seed, "mc-dropout"),
    )
    spread = Z_95 * samples.std(axis=0, ddof=1)
    result.lower95 = result.mean - spread
    result.upper95 = result.mean + spread
    return result
