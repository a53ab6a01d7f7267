"""Fused differentiable building blocks: softmax, layer norm, dropout, GELU, DFT magnitude."""

from __future__ import annotations

import functools
import math

import numpy as np
from scipy.special import erf

from ..errors import ParameterError
from .tensor import Tensor, _result, matmul, sqrt

MAGNITUDE_EPS = 1e-12


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply ``gain`` and ``bias``."""
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ParameterError(f"layer_norm affine shapes {gain.shape}/{bias.shape} vs width {x.shape[-1]}")
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    out = normed * gain.data + bias.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        g_norm = g * gain.data
        gx = inv_std * (
            g_norm
            - g_norm.mean(axis=-1, keepdims=True)
            - normed * (g_norm * normed).mean(axis=-1, keepdims=True)
        )
        return gx, (g * normed).sum(axis=lead), g.sum(axis=lead)

    return _result(out, (x, gain, bias), backward)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, rescale survivors by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ParameterError("training-mode dropout needs an explicit rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    keep *= 1.0 / (1.0 - rate)
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    cdf = 0.5 * (1.0 + erf(x.data * _SQRT_HALF))
    pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI

    return _result(x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),))


@functools.lru_cache(maxsize=16)
def dft_matrices(n: int, dtype_name: str = "float32") -> tuple[np.ndarray, np.ndarray]:
    """Cosine and negative-sine matrices of shape (n, n//2 + 1) for the real DFT."""
    t = np.arange(n, dtype=np.int64)
    k = np.arange(n // 2 + 1, dtype=np.int64)
    angle = (np.outer(t, k) % n) * (2.0 * math.pi / n)
    cos = np.cos(angle)
    sin = -np.sin(angle)
    sin[:, 0] = 0.0
    if n % 2 == 0:
        sin[:, n // 2] = 0.0
    cos = cos.astype(dtype_name)
    sin = sin.astype(dtype_name)
    cos.setflags(write=False)
    sin.setflags(write=False)
    return cos, sin


def dft_magnitude(x: Tensor) -> Tensor:
    """|rFFT(x)| along the last axis as sqrt(re^2 + im^2 + 1e-12)."""
    n = x.shape[-1]
    if n < 2:
        raise ParameterError(f"dft_magnitude needs length >= 2, got {n}")
    cos, sin = dft_matrices(n, x.dtype.name)
    flat = x if x.ndim >= 2 else x.reshape(1, n)
    re = matmul(flat, Tensor(cos, dtype=cos.dtype))
    im = matmul(flat, Tensor(sin, dtype=sin.dtype))
    mag = sqrt(re * re + im * im + MAGNITUDE_EPS)
    return mag if x.ndim >= 2 else mag.reshape(n // 2 + 1)
