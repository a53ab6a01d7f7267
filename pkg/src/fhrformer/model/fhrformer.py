"""Masked transformer autoencoder over signal patches.

Visible patches are embedded and encoded; the decoder sees every position
(encoder output for visible patches, the shared mask token for masked ones)
and cross-attends to the encoder output.  A linear head maps each decoder
row back to patch space, and the reconstruction keeps original values on
visible patches.

Each signal is standardized by the statistics of its own visible,
non-padding samples before embedding (mean and standard deviation with the
default ``input_norm="zscore"``, minimum and range with ``"minmax"``), and
the head output is mapped back with the same constants.  Losses, metrics
and composition therefore all live in the stored [0, 1] scale.

All batched arrays follow (batch, patches, features).  ``masked`` is a
boolean (B, N) array, True where a patch is hidden from the encoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, NumericalError
from ..numerics import (
    Tensor,
    dropout,
    gather_rows,
    gelu,
    layer_norm,
    linear,
    matmul,
    no_grad,
    softmax,
    where,
)
from .config import ModelConfig
from .layout import patchify

KEY_MASK_BIAS = -1e9
MIN_INPUT_RANGE = 1.0 / 240.0  # 1 bpm in stored units; guards flat signals


def input_scaling(patches: np.ndarray, masked: np.ndarray, kind: str = "zscore") -> tuple[np.ndarray, np.ndarray]:
    """Per-signal (offset, scale), each (B, 1, 1), from visible non-zero samples.

    Exact zeros are left padding (prepared values are never zero), so they
    are excluded along with every masked patch.
    """
    batch = patches.shape[0]
    offset = np.zeros((batch, 1, 1))
    scale = np.ones((batch, 1, 1))
    if kind == "none":
        return offset, scale
    usable = ~np.asarray(masked, dtype=bool)[..., None] & (patches != 0)
    lo = np.where(usable, patches, np.inf).min(axis=(1, 2))
    hi = np.where(usable, patches, -np.inf).max(axis=(1, 2))
    found = usable.any(axis=(1, 2))
    if kind == "zscore":
        count = np.maximum(usable.sum(axis=(1, 2)), 1)
        mean = np.where(usable, patches, 0).sum(axis=(1, 2)) / count
        var = np.where(usable, (patches - mean[:, None, None]) ** 2, 0).sum(axis=(1, 2)) / count
        lo, width = mean, np.sqrt(var)
    else:
        width = hi - lo
    offset[found, 0, 0] = lo[found]
    scale[found, 0, 0] = np.maximum(width[found], MIN_INPUT_RANGE)
    return offset, scale


def positional_encoding(positions: np.ndarray, d_model: int, dtype=np.float32) -> np.ndarray:
    """Fixed sinusoidal encodings; sin on even feature indices, cos on odd."""
    positions = np.asarray(positions, dtype=np.float64)
    half = np.arange(0, d_model, 2, dtype=np.float64)
    freq = np.exp(-math.log(10000.0) * half / d_model)
    angle = positions[..., None] * freq
    table = np.empty(positions.shape + (d_model,), dtype=np.float64)
    table[..., 0::2] = np.sin(angle)
    table[..., 1::2] = np.cos(angle[..., : d_model // 2])
    return table.astype(dtype)


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    d, f, p = config.d_model, config.ffn_dim, config.patch_size
    params: dict[str, np.ndarray] = {}

    def dense(name: str, fan_out: int, fan_in: int) -> None:
        params[f"{name}.weight"] = _glorot(rng, fan_out, fan_in)
        params[f"{name}.bias"] = np.zeros(fan_out)

    def norm(name: str) -> None:
        params[f"{name}.gain"] = np.ones(d)
        params[f"{name}.bias"] = np.zeros(d)

    def attention(name: str) -> None:
        for proj in ("q", "k", "v", "o"):
            dense(f"{name}.{proj}", d, d)

    dense("embed", d, p)
    params["mask_token"] = rng.normal(0.0, 0.02, size=d)
    for layer in range(config.encoder_layers):
        prefix = f"encoder.{layer}"
        attention(f"{prefix}.self_attn")
        dense(f"{prefix}.ffn.fc1", f, d)
        dense(f"{prefix}.ffn.fc2", d, f)
        norm(f"{prefix}.norm1")
        norm(f"{prefix}.norm2")
    for layer in range(config.decoder_layers):
        prefix = f"decoder.{layer}"
        attention(f"{prefix}.self_attn")
        attention(f"{prefix}.cross_attn")
        dense(f"{prefix}.ffn.fc1", f, d)
        dense(f"{prefix}.ffn.fc2", d, f)
        norm(f"{prefix}.norm1")
        norm(f"{prefix}.norm2")
        norm(f"{prefix}.norm3")
    dense("head", p, d)
    return params


@dataclass
class Reconstruction:
    predictions: Tensor        # x_hat, (B, N, p), head output in stored units for every patch
    reconstruction: Tensor     # x^R, (B, L), originals on visible patches
    latent: Tensor             # Z, (B, U_max, d); rows beyond each sample's |U| are padding
    latent_valid: np.ndarray   # (B, U_max) bool
    masked: np.ndarray         # (B, N) bool
    patches: np.ndarray        # (B, N, p) input patches


@dataclass
class VisibleEmbedding:
    embedded: Tensor           # (B, U_max, d)
    index: np.ndarray          # (B, U_max) absolute patch index of each row
    valid: np.ndarray          # (B, U_max) bool


class FHRFormer:
    def __init__(
        self,
        config: ModelConfig,
        params: dict[str, np.ndarray] | None = None,
        seed: int = 0,
        dtype=np.float32,
    ):
        self.config = config
        if params is None:
            params = init_params(config, np.random.default_rng(seed))
        self.params: dict[str, Tensor] = {
            name: Tensor(np.array(value, dtype=dtype), requires_grad=True, dtype=dtype)
            for name, value in params.items()
        }

    @property
    def dtype(self) -> np.dtype:
        return self.params["embed.weight"].dtype

    def astype(self, dtype) -> FHRFormer:
        return FHRFormer(self.config, self.state_dict(), dtype=dtype)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            raise DimensionError("state dict keys do not match the model parameters")
        for name, value in state.items():
            target = self.params[name]
            if value.shape != target.shape:
                raise DimensionError(f"{name}: shape {value.shape} != {target.shape}")
            target.data = np.array(value, dtype=target.dtype)
            target.grad = None

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.params.values())

    # -- building blocks ---------------------------------------------------------
    def _positions(self, positions, batch: int, n_patches: int) -> np.ndarray:
        if positions is None:
            positions = np.arange(n_patches)
        table = positional_encoding(positions, self.config.d_model, self.dtype)
        return np.broadcast_to(table, (batch, n_patches, self.config.d_model))

    def _attention(self, prefix: str, query: Tensor, memory: Tensor, key_bias) -> Tensor:
        P = self.params
        heads, head_dim = self.config.heads, self.config.head_dim
        batch, n_q, width = query.shape
        n_k = memory.shape[1]
        q = linear(query, P[f"{prefix}.q.weight"], P[f"{prefix}.q.bias"])
        k = linear(memory, P[f"{prefix}.k.weight"], P[f"{prefix}.k.bias"])
        v = linear(memory, P[f"{prefix}.v.weight"], P[f"{prefix}.v.bias"])
        q = q.reshape(batch, n_q, heads, head_dim).transpose(0, 2, 1, 3)
        k = k.reshape(batch, n_k, heads, head_dim).transpose(0, 2, 3, 1)
        v = v.reshape(batch, n_k, heads, head_dim).transpose(0, 2, 1, 3)
        scores = matmul(q, k) * (1.0 / math.sqrt(head_dim))
        if key_bias is not None:
            scores = scores + key_bias
        context = matmul(softmax(scores, axis=-1), v)
        context = context.transpose(0, 2, 1, 3).reshape(batch, n_q, width)
        return linear(context, P[f"{prefix}.o.weight"], P[f"{prefix}.o.bias"])

    def _ffn(self, prefix: str, x: Tensor) -> Tensor:
        P = self.params
        hidden = gelu(linear(x, P[f"{prefix}.fc1.weight"], P[f"{prefix}.fc1.bias"]))
        return linear(hidden, P[f"{prefix}.fc2.weight"], P[f"{prefix}.fc2.bias"])

    def _norm(self, prefix: str, x: Tensor) -> Tensor:
        return layer_norm(x, self.params[f"{prefix}.gain"], self.params[f"{prefix}.bias"])

    def _key_bias(self, valid: np.ndarray):
        if valid.all():
            return None
        bias = np.where(valid, 0.0, KEY_MASK_BIAS).astype(self.dtype)
        return Tensor(bias[:, None, None, :], dtype=self.dtype)

    # -- stages ------------------------------------------------------------------
    def embed_visible(
        self,
        patches: np.ndarray,
        masked: np.ndarray,
        positions=None,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> VisibleEmbedding:
        """W_in x_i + b_in + p_i for visible patches, keyed by absolute patch index."""
        batch, n_patches, _ = patches.shape
        counts = (~masked).sum(axis=1)
        if (counts == 0).any():
            raise DimensionError("every sample needs at least one visible patch")
        width = int(counts.max())
        index = np.argsort(masked, axis=1, kind="stable")[:, :width]
        valid = np.arange(width)[None, :] < counts[:, None]
        rows = np.arange(batch)[:, None]
        visible = np.where(valid[..., None], patches[rows, index], 0).astype(self.dtype)
        pos = self._positions(positions, batch, n_patches)[rows, index]
        P = self.params
        embedded = linear(Tensor(visible, dtype=self.dtype), P["embed.weight"], P["embed.bias"])
        embedded = embedded + Tensor(pos, dtype=self.dtype)
        embedded = dropout(embedded, self.config.dropout, training, rng)
        return VisibleEmbedding(embedded, index, valid)

    def encode(
        self,
        embedded: Tensor,
        valid: np.ndarray | None = None,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Post-norm self-attention blocks over the visible patches only."""
        if valid is None:
            valid = np.ones(embedded.shape[:2], dtype=bool)
        key_bias = self._key_bias(valid)
        rate = self.config.dropout
        h = embedded
        for layer in range(self.config.encoder_layers):
            prefix = f"encoder.{layer}"
            attn = self._attention(f"{prefix}.self_attn", h, h, key_bias)
            h = self._norm(f"{prefix}.norm1", h + dropout(attn, rate, training, rng))
            ff = self._ffn(f"{prefix}.ffn", h)
            h = self._norm(f"{prefix}.norm2", h + dropout(ff, rate, training, rng))
        return h

    def decode(
        self,
        latent: Tensor,
        index: np.ndarray,
        valid: np.ndarray,
        masked: np.ndarray,
        positions=None,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Decoder over all N positions with cross-attention to the encoder output."""
        batch, n_patches = masked.shape
        rank = np.zeros((batch, n_patches), dtype=np.intp)
        rows, cols = np.nonzero(valid)
        rank[rows, index[rows, cols]] = cols
        from_encoder = gather_rows(latent, rank)
        mask_token = self.params["mask_token"]
        d = where(~masked[..., None], from_encoder, mask_token)
        d = d + Tensor(self._positions(positions, batch, n_patches), dtype=self.dtype)
        rate = self.config.dropout
        d = dropout(d, rate, training, rng)
        key_bias = self._key_bias(valid)
        for layer in range(self.config.decoder_layers):
            prefix = f"decoder.{layer}"
            attn = self._attention(f"{prefix}.self_attn", d, d, None)
            d = self._norm(f"{prefix}.norm1", d + dropout(attn, rate, training, rng))
            cross = self._attention(f"{prefix}.cross_attn", d, latent, key_bias)
            d = self._norm(f"{prefix}.norm2", d + dropout(cross, rate, training, rng))
            ff = self._ffn(f"{prefix}.ffn", d)
            d = self._norm(f"{prefix}.norm3", d + dropout(ff, rate, training, rng))
        return d

    def project_and_compose(
        self,
        decoded: Tensor,
        masked: np.ndarray,
        patches: np.ndarray,
        offset: np.ndarray | None = None,
        scale: np.ndarray | None = None,
    ) -> tuple[Tensor, Tensor]:
        """Return (x_hat for every patch, x^R with originals kept on visible patches).

        ``offset``/``scale`` undo the input scaling so x_hat is in stored units.
        """
        P = self.params
        predictions = linear(decoded, P["head.weight"], P["head.bias"])
        if scale is not None:
            predictions = predictions * Tensor(scale.astype(self.dtype), dtype=self.dtype)
        if offset is not None:
            predictions = predictions + Tensor(offset.astype(self.dtype), dtype=self.dtype)
        original = Tensor(patches, dtype=self.dtype)
        composed = where(~masked[..., None], original, predictions)
        batch, n_patches, patch_size = patches.shape
        return predictions, composed.reshape(batch, n_patches * patch_size)

    # -- full pass ---------------------------------------------------------------
    def forward(
        self,
        signals: np.ndarray,
        masked: np.ndarray,
        positions=None,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Reconstruction:
        signals = np.asarray(signals, dtype=self.dtype)
        if signals.ndim == 1:
            signals = signals[None, :]
        masked = np.asarray(masked, dtype=bool)
        if masked.ndim == 1:
            masked = masked[None, :]
        patches = patchify(signals, self.config.patch_size)
        if masked.shape != patches.shape[:2]:
            raise DimensionError(f"mask shape {masked.shape} != patch grid {patches.shape[:2]}")
        offset, scale = input_scaling(patches, masked, self.config.input_norm)
        scaled = ((patches - offset) / scale).astype(self.dtype)
        vis = self.embed_visible(scaled, masked, positions, training, rng)
        latent = self.encode(vis.embedded, vis.valid, training, rng)
        decoded = self.decode(latent, vis.index, vis.valid, masked, positions, training, rng)
        predictions, composed = self.project_and_compose(decoded, masked, patches, offset, scale)
        if not np.isfinite(predictions.data).all():
            raise NumericalError("model forward pass produced a non-finite value")
        return Reconstruction(predictions, composed, latent, vis.valid, masked, patches)

    __call__ = forward

    def features(self, signals: np.ndarray) -> np.ndarray:
        """Mean-pooled encoder output with every patch visible, one row per signal."""
        signals = np.asarray(signals, dtype=self.dtype)
        if signals.ndim == 1:
            signals = signals[None, :]
        patches = patchify(signals, self.config.patch_size)
        masked = np.zeros(patches.shape[:2], dtype=bool)
        offset, scale = input_scaling(patches, masked, self.config.input_norm)
        with no_grad():
            vis = self.embed_visible(((patches - offset) / scale).astype(self.dtype), masked)
            latent = self.encode(vis.embedded, vis.valid)
        return latent.data.mean(axis=1)
