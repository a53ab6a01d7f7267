"""Reconstruction quality metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DataError

METRIC_KEYS = ("rl", "mse", "rmse", "mae", "psnr", "ssim", "fid", "cc")


@dataclass
class MetricsReport:
    rl: float
    mse: float
    rmse: float
    mae: float
    psnr: float
    ssim: float
    fid: float
    cc: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def to_text(self) -> str:
        return "".join(f"{key}={getattr(self, key)!r}\n" for key in METRIC_KEYS)

    @classmethod
    def from_text(cls, text: str) -> MetricsReport:
        values = {}
        for line in text.splitlines():
            if line.strip():
                key, _, value = line.partition("=")
                values[key.strip()] = float(value)
        missing = {f.name for f in fields(cls)} - set(values)
        if missing:
            raise DataError(f"metrics record lacks keys {sorted(missing)}")
        return cls(**{k: values[k] for k in METRIC_KEYS})


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ContractError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.size == 0:
        raise ContractError("metrics need non-empty inputs")
    return x, y


def mse(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean((x - y) ** 2))


def rmse(x, y) -> float:
    return math.sqrt(mse(x, y))


def mae(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean(np.abs(x - y)))


def cc(x, y) -> float:
    """Pearson correlation."""
    x, y = _pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(np.sum(xc * xc)) * float(np.sum(yc * yc)))
    if denom == 0.0:
        raise DataError("correlation is undefined for a zero-variance input")
    return float(np.sum(xc * yc) / denom)


def psnr_from_mse(error: float, max_value: float = 1.0) -> float:
    if error == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value ** 2 / error)


def psnr(x, y, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the inputs are identical."""
    return psnr_from_mse(mse(x, y), max_value)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    t = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-0.5 * (t / sigma) ** 2)
    return w / w.sum()


def ssim_1d(x, y, window: int = 11, sigma: float = 1.5, data_range: float = 1.0) -> float:
    """Mean SSIM over all stride-1 Gaussian-weighted windows (no padding)."""
    x, y = _pair(x, y)
    if x.ndim != 1 or x.shape[0] < window:
        raise DataError(f"ssim needs 1-D inputs of length >= {window}")
    w = gaussian_window(window, sigma)
    xs = sliding_window_view(x, window)
    ys = sliding_window_view(y, window)
    mu_x = xs @ w
    mu_y = ys @ w
    var_x = (xs * xs) @ w - mu_x ** 2
    var_y = (ys * ys) @ w - mu_y ** 2
    cov = (xs * ys) @ w - mu_x * mu_y
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def _gaussian_fit(features: np.ndarray, shrinkage: float) -> tuple[np.ndarray, np.ndarray]:
    n, dim = features.shape
    mu = features.mean(axis=0)
    if n == 1:
        return mu, np.zeros((dim, dim))
    sigma = np.cov(features, rowvar=False).reshape(dim, dim)
    if n < dim + 1:
        target = np.trace(sigma) / dim * np.eye(dim)
        sigma = (1.0 - shrinkage) * sigma + shrinkage * target
    return mu, sigma


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((matrix + matrix.T) / 2.0)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def gaussian_frechet(mu_a, sigma_a, mu_b, sigma_b) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)), clamped at zero.

    The cross term uses the symmetric form S_a^(1/2) S_b S_a^(1/2), whose
    eigenvalues equal those of S_a S_b; negative eigenvalues are clamped.
    """
    root_a = _psd_sqrt(np.asarray(sigma_a, dtype=np.float64))
    inner = root_a @ np.asarray(sigma_b, dtype=np.float64) @ root_a
    eig = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_cross = float(np.sum(np.sqrt(np.clip(eig, 0.0, None))))
    diff = np.asarray(mu_a, dtype=np.float64) - np.asarray(mu_b, dtype=np.float64)
    value = float(diff @ diff + np.trace(sigma_a) + np.trace(sigma_b) - 2.0 * tr_cross)
    return max(value, 0.0)


def frechet_distance(features_a, features_b, shrinkage: float = 0.1) -> float:
    """Fréchet distance between Gaussians fitted to two feature sets (rows = samples).

    When a set has fewer than dim + 1 rows its covariance is shrunk toward a
    scaled identity by ``shrinkage``.
    """
    a = np.atleast_2d(np.asarray(features_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(features_b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise DataError("Fréchet distance needs non-empty feature sets")
    if a.shape[1] != b.shape[1]:
        raise ContractError(f"feature widths differ: {a.shape[1]} vs {b.shape[1]}")
    return gaussian_frechet(*_gaussian_fit(a, shrinkage), *_gaussian_fit(b, shrinkage))


def fid_latent(set_a, set_b, model) -> float:
    """Fréchet distance between mean-pooled encoder features of two signal sets."""
    set_a = np.atleast_2d(np.asarray(set_a))
    set_b = np.atleast_2d(np.asarray(set_b))
    if set_a.shape[0] == 0 or set_b.shape[0] == 0:
        raise DataError("FID needs non-empty signal sets")
    return frechet_distance(model.features(set_a), model.features(set_b))
