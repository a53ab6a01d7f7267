"""Synthetic FHR generator.

Each record is a constant baseline from the normal band, a slow sinusoidal
drift, band-limited noise for long-term variability (3-5 cycles per minute
at 2 Hz by default), a little smoothed noise for short-term variability,
Poisson-placed
Gaussian decelerations, and Poisson-placed dropout runs (zeros).  The
generator is not a physiological model; it exists so the pipeline can run
end to end without clinical recordings.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.ndimage import gaussian_filter1d

from ..errors import ConfigError
from ..prep import RawRecord, VALID_BPM
from ..rng import substream

SAMPLES_PER_HOUR = 7200


@dataclass(frozen=True)
class SyntheticSpec:
    length: int = 1920
    length_jitter: int = 0
    baseline_range: tuple[float, float] = (110.0, 160.0)
    drift_amplitude: float = 5.0
    drift_period_range: tuple[float, float] = (1200.0, 4800.0)
    variability: float = 4.0
    variability_band: tuple[float, float] = (3 / 120, 5 / 120)
    short_term_variability: float = 1.0
    short_term_smoothing: float = 2.0
    decel_rate: float = 6.0
    decel_depth_range: tuple[float, float] = (15.0, 40.0)
    decel_width_range: tuple[float, float] = (10.0, 40.0)
    dropout_rate: float = 6.0
    dropout_duration_range: tuple[int, int] = (4, 120)
    seed: int = 0

    def __post_init__(self):
        if self.length < 1 or not 0 <= self.length_jitter < self.length:
            raise ConfigError("length must be positive and jitter smaller than length")
        for name in ("drift_amplitude", "variability", "short_term_variability", "decel_rate", "dropout_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        lo, hi = self.baseline_range
        if not VALID_BPM[0] <= lo <= hi <= VALID_BPM[1]:
            raise ConfigError(f"baseline range {self.baseline_range} outside {VALID_BPM}")
        f_lo, f_hi = self.variability_band
        if not 0 < f_lo < f_hi <= 0.5:
            raise ConfigError(f"variability band {self.variability_band} must satisfy 0 < lo < hi <= 0.5 cycles/sample")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> SyntheticSpec:
        known = {f.name: f for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigError(f"unknown synthetic spec keys: {sorted(unknown)}")
        cleaned = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
        return cls(**cleaned)

    def replace(self, **changes) -> SyntheticSpec:
        return SyntheticSpec(**{**self.to_dict(), **changes})


def _band_noise(rng: np.random.Generator, n: int, band: tuple[float, float]) -> np.ndarray:
    """Unit-variance Gaussian noise restricted to ``band`` (cycles/sample)."""
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n)
    spectrum[(freqs < band[0]) | (freqs > band[1])] = 0.0
    noise = np.fft.irfft(spectrum, n)
    std = noise.std()
    return noise / std if std > 0 else noise


def synthesize(spec: SyntheticSpec, index: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (clean signal, signal with dropout zeros) for record ``index``."""
    rng = substream(spec.seed, "synth", index)
    n = spec.length - int(rng.integers(0, spec.length_jitter + 1))
    t = np.arange(n, dtype=np.float64)

    signal = np.full(n, rng.uniform(*spec.baseline_range))
    if spec.drift_amplitude > 0:
        period = rng.uniform(*spec.drift_period_range)
        signal += spec.drift_amplitude * np.sin(2 * np.pi * t / period + rng.uniform(0, 2 * np.pi))
    if spec.variability > 0:
        signal += spec.variability * _band_noise(rng, n, spec.variability_band)
    if spec.short_term_variability > 0:
        noise = gaussian_filter1d(rng.standard_normal(n), spec.short_term_smoothing, mode="wrap")
        signal += spec.short_term_variability * noise / noise.std()
    if spec.decel_rate > 0:
        for _ in range(rng.poisson(spec.decel_rate * n / SAMPLES_PER_HOUR)):
            centre = rng.uniform(0, n)
            width = rng.uniform(*spec.decel_width_range)
            depth = rng.uniform(*spec.decel_depth_range)
            signal -= depth * np.exp(-0.5 * ((t - centre) / width) ** 2)
    clean = np.clip(signal, *VALID_BPM)

    observed = clean.copy()
    if spec.dropout_rate > 0:
        lo, hi = spec.dropout_duration_range
        for _ in range(rng.poisson(spec.dropout_rate * n / SAMPLES_PER_HOUR)):
            start = int(rng.integers(0, n))
            observed[start:start + int(rng.integers(lo, hi + 1))] = 0.0
    return clean, observed


def episode_id(seed: int, index: int) -> str:
    return f"syn{seed}-{index:06d}"


def generate_synthetic(spec: SyntheticSpec, count: int) -> list[RawRecord]:
    return [RawRecord(synthesize(spec, i)[1], episode_id(spec.seed, i)) for i in range(count)]


def generate_clean(spec: SyntheticSpec, count: int) -> list[np.ndarray]:
    """Dropout-free versions of the records ``generate_synthetic`` would emit."""
    return [synthesize(spec, i)[0] for i in range(count)]
