"""Raw FHR records -> fixed-length, normalized, mask-annotated signals."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, ParameterError

SAMPLING_RATE_HZ = 2.0
DEFAULT_LENGTH = 7200
BPM_RANGE = (0.0, 240.0)
VALID_BPM = (50.0, 210.0)


@dataclass
class RawRecord:
    samples: np.ndarray
    episode_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise DataError("raw samples must be one-dimensional")
        if (self.samples < 0).any():
            raise DataError(f"negative FHR value in episode {self.episode_id!r}")


@dataclass
class PreparedSignal:
    """A normalized length-L signal. ``missing_mask`` is 1 where the sample was observed."""

    values: np.ndarray
    missing_mask: np.ndarray
    episode_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.missing_mask = np.asarray(self.missing_mask, dtype=np.uint8)
        if self.values.shape != self.missing_mask.shape or self.values.ndim != 1:
            raise DataError("values and missing_mask must be equal-length 1-D arrays")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def pad_length(self) -> int:
        return leading_pad_length(self.values, self.missing_mask)


def leading_pad_length(values: np.ndarray, missing_mask: np.ndarray) -> int:
    """Length of the zero-valued, unobserved prefix added by left padding.

    Interpolation extends the first observed value backwards, so no
    interpolated sample is ever exactly zero; the zero prefix is padding.
    """
    padded = (np.asarray(missing_mask) == 0) & (np.asarray(values) == 0)
    if padded.all():
        return padded.shape[0]
    return int(np.argmin(padded))


@dataclass
class DopplerConfig:
    window: int = 30
    double_band: tuple[float, float] = (1.8, 2.2)
    half_band: tuple[float, float] = (0.45, 0.55)
    valid_range: tuple[float, float] = VALID_BPM


def _running_median(samples: np.ndarray, window: int) -> np.ndarray:
    """Centered running median over the non-zero samples in each window."""
    vals = np.where(samples > 0, samples, np.nan)
    left = window // 2
    right = window - 1 - left
    padded = np.pad(vals, (left, right), constant_values=np.nan)
    windows = sliding_window_view(padded, window)
    out = np.full(samples.shape[0], np.nan)
    has_data = ~np.isnan(windows).all(axis=1)
    if has_data.any():
        out[has_data] = np.nanmedian(windows[has_data], axis=1)
    return out


def correct_doppler_artifacts(
    raw: RawRecord, config: DopplerConfig | None = None
) -> tuple[RawRecord, np.ndarray, np.ndarray]:
    """Undo frequency doubling/halving and flag invalid samples.

    Returns the corrected record, the artifact mask (True where a sample was
    halved or doubled) and the observed mask (True where the corrected value
    is a usable measurement).
    """
    cfg = config or DopplerConfig()
    samples = raw.samples.copy()
    if samples.size == 0:
        raise DataError(f"episode {raw.episode_id!r} has no samples")

    reference = _running_median(samples, cfg.window)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = samples / reference
    live = (samples > 0) & np.isfinite(ratio)
    doubled = live & (ratio >= cfg.double_band[0]) & (ratio <= cfg.double_band[1])
    halved = live & (ratio >= cfg.half_band[0]) & (ratio <= cfg.half_band[1])
    samples[doubled] *= 0.5
    samples[halved] *= 2.0

    lo, hi = cfg.valid_range
    observed = (samples > 0) & (samples >= lo) & (samples <= hi)
    return RawRecord(samples, raw.episode_id), doubled | halved, observed


def interpolate_gaps(samples: np.ndarray, missing_mask: np.ndarray) -> np.ndarray:
    """Linearly bridge every unobserved run; flat extension at the ends."""
    samples = np.asarray(samples, dtype=np.float64)
    observed = np.asarray(missing_mask).astype(bool)
    if not observed.any():
        raise DataError("cannot interpolate a signal with no observed samples")
    idx = np.arange(samples.shape[0])
    out = samples.copy()
    out[~observed] = np.interp(idx[~observed], idx[observed], samples[observed])
    return out


def fit_length(
    samples: np.ndarray, missing_mask: np.ndarray, length: int = DEFAULT_LENGTH
) -> tuple[np.ndarray, np.ndarray]:
    """Keep the last ``length`` samples, or left-pad with unobserved zeros."""
    if length <= 0:
        raise ParameterError(f"target length must be positive, got {length}")
    samples = np.asarray(samples, dtype=np.float64)
    mask = np.asarray(missing_mask, dtype=np.uint8)
    n = samples.shape[0]
    if n >= length:
        return samples[n - length:].copy(), mask[n - length:].copy()
    pad = length - n
    return (
        np.concatenate([np.zeros(pad), samples]),
        np.concatenate([np.zeros(pad, dtype=np.uint8), mask]),
    )


def normalize(values: np.ndarray) -> np.ndarray:
    """Map bpm in the fixed range [0, 240] onto [0, 1]."""
    values = np.asarray(values)
    lo, hi = BPM_RANGE
    if values.size and (values.min() < lo or values.max() > hi or not np.isfinite(values).all()):
        raise DataError(f"values outside [{lo}, {hi}] bpm cannot be normalized")
    return (values - lo) / (hi - lo)


def denormalize(values: np.ndarray) -> np.ndarray:
    lo, hi = BPM_RANGE
    return np.asarray(values) * (hi - lo) + lo


def prepare(
    raw: RawRecord, length: int = DEFAULT_LENGTH, doppler: DopplerConfig | None = None
) -> PreparedSignal:
    """Artifact correction, interpolation, length fitting and normalization."""
    corrected, _, observed = correct_doppler_artifacts(raw, doppler)
    filled = interpolate_gaps(corrected.samples, observed)
    values, mask = fit_length(filled, observed.astype(np.uint8), length)
    values = np.clip(values, *BPM_RANGE)
    return PreparedSignal(normalize(values), mask, raw.episode_id)


def read_raw_csv(path: str | Path, episode_id: str | None = None) -> RawRecord:
    """Read a two-column ``sample_index,fhr_bpm`` file (header optional)."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                rows.append((int(row[0]), float(row[1])))
            except ValueError:
                if rows:
                    raise DataError(f"{path}: malformed row {row!r}") from None
    if not rows:
        raise DataError(f"{path}: no samples")
    rows.sort()
    return RawRecord(np.array([v for _, v in rows]), episode_id or path.stem)


def write_raw_csv(record: RawRecord, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_index", "fhr_bpm"])
        for i, v in enumerate(record.samples):
            writer.writerow([i, f"{v:.3f}"])
