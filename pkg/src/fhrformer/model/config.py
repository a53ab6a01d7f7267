from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..errors import ConfigError

PATCH_SIZES = (30, 60, 120, 240, 480)
INPUT_NORMS = ("minmax", "zscore", "none")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. Defaults are the full-scale values."""

    patch_size: int = 30
    signal_length: int = 7200
    d_model: int = 512
    ffn_dim: int = 1024
    encoder_layers: int = 5
    decoder_layers: int = 5
    heads: int = 16
    dropout: float = 0.1
    mask_ratio: float = 0.15
    input_norm: str = "zscore"

    def __post_init__(self):
        for name in ("patch_size", "signal_length", "d_model", "ffn_dim", "heads"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.encoder_layers < 1 or self.decoder_layers < 1:
            raise ConfigError("encoder and decoder need at least one layer each")
        if self.signal_length % self.patch_size:
            raise ConfigError(
                f"signal length {self.signal_length} is not divisible by patch size {self.patch_size}"
            )
        if self.d_model % self.heads:
            raise ConfigError(f"d_model {self.d_model} is not divisible by {self.heads} heads")
        if not 0.0 < self.mask_ratio < 1.0:
            raise ConfigError(f"mask ratio must lie in (0, 1), got {self.mask_ratio}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.input_norm not in INPUT_NORMS:
            raise ConfigError(f"input_norm must be one of {INPUT_NORMS}, got {self.input_norm!r}")

    @property
    def n_patches(self) -> int:
        return self.signal_length // self.patch_size

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**values)

    def replace(self, **changes) -> ModelConfig:
        return ModelConfig(**{**self.to_dict(), **changes})
