"""Hybrid training objective: masked-patch squared error plus focal frequency loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParameterError
from .model.fhrformer import Reconstruction
from .numerics import Tensor, dft_magnitude, dft_matrices, exp, gather_rows, matmul, power, sqrt
from .numerics.functional import MAGNITUDE_EPS


@dataclass(frozen=True)
class LossBreakdown:
    recon: float
    freq: float
    total: float
    alpha: float
    beta: float


def recon_loss(predictions: Tensor, patches: np.ndarray, masked: np.ndarray) -> Tensor:
    """Per-sample mean over masked patches of the summed squared patch error.

    ``predictions`` and ``patches`` are (B, N, p); ``masked`` is (B, N) bool.
    Returns a (B,) tensor.
    """
    masked = np.asarray(masked, dtype=bool)
    counts = masked.sum(axis=1)
    if (counts == 0).any():
        raise ContractError("reconstruction loss needs at least one masked patch per sample")
    dtype = predictions.dtype
    diff = predictions - Tensor(patches, dtype=dtype)
    weights = Tensor(masked[..., None].astype(dtype), dtype=dtype)
    per_sample = (diff * diff * weights).sum(axis=(1, 2))
    return per_sample * Tensor(1.0 / counts, dtype=dtype)


def freq_loss(reconstruction: Tensor, target, beta: float = 1.0) -> Tensor:
    """Focal frequency loss between composed signals, averaged over the n//2+1 bins.

    Works on (L,) or (B, L) inputs and returns a scalar or (B,) tensor.
    """
    target = target if isinstance(target, Tensor) else Tensor(target, dtype=reconstruction.dtype)
    if reconstruction.shape != target.shape:
        raise ContractError(f"length mismatch: {reconstruction.shape} vs {target.shape}")
    delta = (dft_magnitude(reconstruction) - dft_magnitude(target)).abs()
    focal = 1.0 - exp(-delta)
    if beta != 1.0:
        focal = power(focal, beta)
    return (focal * delta).mean(axis=-1)


def masked_freq_loss(predictions: Tensor, patches: np.ndarray, masked: np.ndarray, beta: float = 1.0) -> Tensor:
    """``freq_loss`` of the composed reconstruction, touching only masked patches.

    Composition keeps the target on visible patches, so the reconstruction's
    DFT is the target's DFT plus the DFT of the masked-patch residual.  Only
    the basis rows under masked patches enter the differentiable product.
    """
    masked = np.asarray(masked, dtype=bool)
    batch, n_patches, p = patches.shape
    dtype = predictions.dtype
    cos, sin = dft_matrices(n_patches * p, np.dtype(dtype).name)
    flat = np.asarray(patches, dtype=dtype).reshape(batch, -1)
    re_t, im_t = flat @ cos, flat @ sin

    counts = masked.sum(axis=1)
    width = max(int(counts.max()), 1)
    index = np.argsort(~masked, axis=1, kind="stable")[:, :width]
    keep = (np.arange(width)[None, :] < counts[:, None]).astype(dtype)
    residual = gather_rows(predictions - Tensor(patches, dtype=dtype), index)
    residual = (residual * Tensor(keep[..., None], dtype=dtype)).reshape(batch, 1, width * p)

    def spectrum(basis: np.ndarray, base: np.ndarray) -> Tensor:
        rows = basis.reshape(n_patches, p, -1)[index].reshape(batch, width * p, -1)
        return matmul(residual, Tensor(rows, dtype=dtype)).reshape(batch, -1) + Tensor(base, dtype=dtype)

    re, im = spectrum(cos, re_t), spectrum(sin, im_t)
    magnitude = sqrt(re * re + im * im + MAGNITUDE_EPS)
    target = np.sqrt(re_t * re_t + im_t * im_t + MAGNITUDE_EPS)
    delta = (magnitude - Tensor(target, dtype=dtype)).abs()
    focal = 1.0 - exp(-delta)
    if beta != 1.0:
        focal = power(focal, beta)
    return (focal * delta).mean(axis=-1)


def total_loss(recon, freq, alpha: float = 0.95):
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    return recon * alpha + freq * (1.0 - alpha)


def hybrid_loss(
    result: Reconstruction, alpha: float = 0.95, beta: float = 1.0
) -> tuple[Tensor, LossBreakdown]:
    """Batch-mean total loss for one forward pass."""
    recon = recon_loss(result.predictions, result.patches, result.masked)
    freq = masked_freq_loss(result.predictions, result.patches, result.masked, beta)
    per_sample = total_loss(recon, freq, alpha)
    loss = per_sample.mean()
    breakdown = LossBreakdown(
        recon=float(recon.data.mean()),
        freq=float(freq.data.mean()),
        total=float(loss.data),
        alpha=alpha,
        beta=beta,
    )
    return loss, breakdown
