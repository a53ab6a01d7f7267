import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fhrformer.errors import ConfigError, DataError, DimensionError
from fhrformer.model import (
    FHRFormer,
    ModelConfig,
    PatchLayout,
    decode_checkpoint,
    encode_checkpoint,
    eligible_patches,
    input_scaling,
    load_checkpoint,
    mask_count,
    patchify,
    positional_encoding,
    sample_mask,
    save_checkpoint,
    unpatchify,
)
from fhrformer.numerics import no_grad

TINY = ModelConfig(
    patch_size=4, signal_length=32, d_model=8, ffn_dim=16,
    encoder_layers=1, decoder_layers=1, heads=2, dropout=0.0,
)


@pytest.fixture
def tiny_model():
    return FHRFormer(TINY, seed=5, dtype=np.float64)


def hand_set_params(config):
    """Deterministic, explicitly specified weights: w[k] = 0.3 * sin(1.7 k + offset)."""
    template = FHRFormer(config, seed=0, dtype=np.float64).state_dict()
    params = {}
    for offset, (name, value) in enumerate(sorted(template.items())):
        k = np.arange(value.size, dtype=np.float64)
        values = 0.3 * np.sin(1.7 * k + offset)
        if name.endswith(".gain"):
            values = 1.0 + values
        params[name] = values.reshape(value.shape)
    return params


# -- scalar desk-calculation oracle -------------------------------------------
def _vec_linear(w, b, x):
    return [sum(w[i][j] * x[j] for j in range(len(x))) + b[i] for i in range(len(w))]


def _layer_norm(x, g, b, eps=1e-5):
    mu = sum(x) / len(x)
    var = sum((v - mu) ** 2 for v in x) / len(x)
    return [(v - mu) / math.sqrt(var + eps) * g[i] + b[i] for i, v in enumerate(x)]


def _gelu(v):
    return 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0)))


def _attention(P, prefix, queries, memory, heads):
    d = len(queries[0])
    hd = d // heads
    q = [_vec_linear(P[f"{prefix}.q.weight"], P[f"{prefix}.q.bias"], r) for r in queries]
    k = [_vec_linear(P[f"{prefix}.k.weight"], P[f"{prefix}.k.bias"], r) for r in memory]
    v = [_vec_linear(P[f"{prefix}.v.weight"], P[f"{prefix}.v.bias"], r) for r in memory]
    out = []
    for qi in q:
        row = [0.0] * d
        for h in range(heads):
            cols = range(h * hd, (h + 1) * hd)
            scores = [sum(qi[c] * kj[c] for c in cols) / math.sqrt(hd) for kj in k]
            top = max(scores)
            weights = [math.exp(s - top) for s in scores]
            total = sum(weights)
            for j, w in enumerate(weights):
                for c in cols:
                    row[c] += w / total * v[j][c]
        out.append(_vec_linear(P[f"{prefix}.o.weight"], P[f"{prefix}.o.bias"], row))
    return out


def _ffn(P, prefix, x):
    hidden = [_gelu(v) for v in _vec_linear(P[f"{prefix}.fc1.weight"], P[f"{prefix}.fc1.bias"], x)]
    return _vec_linear(P[f"{prefix}.fc2.weight"], P[f"{prefix}.fc2.bias"], hidden)


def _add(a, b):
    return [x + y for x, y in zip(a, b)]


def desk_forward(P, config, signal, masked):
    """Row-by-row forward pass written from the block equations, no vectorization."""
    P = {k: v.tolist() for k, v in P.items()}
    p, d = config.patch_size, config.d_model
    n = len(signal) // p
    patches = [list(signal[i * p:(i + 1) * p]) for i in range(n)]
    pe = positional_encoding(np.arange(n), d, np.float64).tolist()
    visible = [i for i in range(n) if not masked[i]]

    h = [_add(_vec_linear(P["embed.weight"], P["embed.bias"], patches[i]), pe[i]) for i in visible]
    for layer in range(config.encoder_layers):
        pre = f"encoder.{layer}"
        a = _attention(P, f"{pre}.self_attn", h, h, config.heads)
        h = [_layer_norm(_add(x, y), P[f"{pre}.norm1.gain"], P[f"{pre}.norm1.bias"]) for x, y in zip(h, a)]
        f = [_ffn(P, f"{pre}.ffn", x) for x in h]
        h = [_layer_norm(_add(x, y), P[f"{pre}.norm2.gain"], P[f"{pre}.norm2.bias"]) for x, y in zip(h, f)]
    z = h

    rows = []
    for i in range(n):
        base = z[visible.index(i)] if i in visible else P["mask_token"]
        rows.append(_add(base, pe[i]))
    for layer in range(config.decoder_layers):
        pre = f"decoder.{layer}"
        a = _attention(P, f"{pre}.self_attn", rows, rows, config.heads)
        rows = [_layer_norm(_add(x, y), P[f"{pre}.norm1.gain"], P[f"{pre}.norm1.bias"]) for x, y in zip(rows, a)]
        c = _attention(P, f"{pre}.cross_attn", rows, z, config.heads)
        rows = [_layer_norm(_add(x, y), P[f"{pre}.norm2.gain"], P[f"{pre}.norm2.bias"]) for x, y in zip(rows, c)]
        f = [_ffn(P, f"{pre}.ffn", x) for x in rows]
        rows = [_layer_norm(_add(x, y), P[f"{pre}.norm3.gain"], P[f"{pre}.norm3.bias"]) for x, y in zip(rows, f)]
    preds = [_vec_linear(P["head.weight"], P["head.bias"], r) for r in rows]
    return np.array(z), np.array(preds)


class TestConfig:
    @pytest.mark.parametrize(
        "changes",
        [
            {"patch_size": 7},
            {"heads": 3},
            {"mask_ratio": 0.0},
            {"mask_ratio": 1.0},
            {"dropout": 1.0},
            {"encoder_layers": 0},
            {"input_norm": "robust"},
        ],
    )
    def test_invalid(self, changes):
        with pytest.raises(ConfigError):
            ModelConfig(**changes)

    def test_defaults_and_dict_round_trip(self):
        cfg = ModelConfig()
        assert (cfg.d_model, cfg.ffn_dim, cfg.encoder_layers, cfg.heads) == (512, 1024, 5, 16)
        assert cfg.n_patches == 240
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestPatchify:
    @pytest.mark.parametrize("p, n", [(30, 240), (480, 15)])
    def test_counts(self, p, n):
        assert patchify(np.zeros(7200), p).shape == (n, p)

    def test_indivisible(self):
        with pytest.raises(ConfigError):
            patchify(np.zeros(100), 30)

    def test_patch_contents(self):
        x = np.arange(12)
        np.testing.assert_array_equal(patchify(x, 4)[1], [4, 5, 6, 7])

    @settings(max_examples=50, deadline=None)
    @given(st.sampled_from([1, 2, 3, 5]), st.integers(1, 20), st.data())
    def test_round_trip(self, p, n, data):
        x = data.draw(arrays(np.float32, n * p))
        assert np.array_equal(unpatchify(patchify(x, p)), x, equal_nan=True)


class TestSampleMask:
    def test_paper_count(self, rng):
        layout = sample_mask(240, 0.15, None, rng)
        assert layout.masked_set.size == 36

    def test_tiny_gamma_masks_one(self, rng):
        assert sample_mask(240, 1e-6, None, rng).masked_set.size == 1

    def test_seeded_determinism(self):
        a = sample_mask(100, 0.3, None, np.random.default_rng(9))
        b = sample_mask(100, 0.3, None, np.random.default_rng(9))
        np.testing.assert_array_equal(a.m, b.m)

    def test_empty_eligible(self, rng):
        with pytest.raises(DataError):
            sample_mask(10, 0.5, np.array([], dtype=int), rng)

    def test_eligible_skips_padding(self):
        np.testing.assert_array_equal(eligible_patches(6, 4, pad_length=5), [2, 3, 4, 5])
        np.testing.assert_array_equal(eligible_patches(6, 4, pad_length=8), [2, 3, 4, 5])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 300), st.floats(0.001, 0.999), st.integers(0, 2**32 - 1))
    def test_partition_and_count(self, n, gamma, seed):
        rng = np.random.default_rng(seed)
        eligible = np.arange(n // 3, n)
        layout = sample_mask(n, gamma, eligible, rng)
        masked, visible = set(layout.masked_set), set(layout.visible_set)
        assert masked | visible == set(range(n)) and not masked & visible
        assert masked <= set(eligible)
        assert len(masked) == min(max(1, math.floor(gamma * eligible.size + 0.5)), eligible.size)
        assert len(masked) >= 1

    def test_from_masked(self):
        layout = PatchLayout.from_masked(np.array([True, False, True]))
        np.testing.assert_array_equal(layout.m, [0, 1, 0])
        assert mask_count(0.5, 3) == 2


class TestEmbedding:
    def test_zero_weights_give_positional_encoding(self, tiny_model):
        tiny_model.params["embed.weight"].data[:] = 0
        tiny_model.params["embed.bias"].data[:] = 0
        patches = np.random.default_rng(0).random((1, 8, 4))
        masked = np.zeros((1, 8), dtype=bool)
        masked[0, [1, 5]] = True
        vis = tiny_model.embed_visible(patches, masked)
        expected = positional_encoding(np.array([0, 2, 3, 4, 6, 7]), 8, np.float64)
        np.testing.assert_array_equal(vis.embedded.data[0], expected)

    def test_single_visible_row(self, tiny_model):
        masked = np.ones((1, 8), dtype=bool)
        masked[0, 3] = False
        vis = tiny_model.embed_visible(np.zeros((1, 8, 4)), masked)
        assert vis.embedded.shape == (1, 1, 8)
        assert vis.index[0, 0] == 3

    def test_dense_product_oracle(self, tiny_model, rng):
        patches = rng.random((2, 8, 4))
        masked = np.zeros((2, 8), dtype=bool)
        masked[0, 2] = masked[1, 6] = True
        vis = tiny_model.embed_visible(patches, masked)
        W = tiny_model.params["embed.weight"].data
        b = tiny_model.params["embed.bias"].data
        for s in range(2):
            idx = np.flatnonzero(~masked[s])
            expected = patches[s, idx] @ W.T + b + positional_encoding(idx, 8, np.float64)
            np.testing.assert_allclose(vis.embedded.data[s], expected, atol=1e-6)

    def test_no_visible_patch(self, tiny_model):
        with pytest.raises(DimensionError):
            tiny_model.embed_visible(np.zeros((1, 8, 4)), np.ones((1, 8), dtype=bool))

    def test_positional_encoding_values(self):
        table = positional_encoding(np.array([0, 3]), 4, np.float64)
        np.testing.assert_allclose(table[0], [0, 1, 0, 1])
        np.testing.assert_allclose(table[1], [math.sin(3), math.cos(3), math.sin(0.03), math.cos(0.03)])


class TestEncoder:
    def test_single_patch_ignores_query_key(self, tiny_model, rng):
        emb = np.asarray(rng.standard_normal((1, 1, 8)))
        from fhrformer.numerics import Tensor

        before = tiny_model.encode(Tensor(emb)).data
        tiny_model.params["encoder.0.self_attn.q.weight"].data *= 7.0
        tiny_model.params["encoder.0.self_attn.k.weight"].data *= -3.0
        after = tiny_model.encode(Tensor(emb)).data
        np.testing.assert_allclose(before, after, atol=1e-12)

    def test_permutation_equivariance(self, tiny_model, rng):
        from fhrformer.numerics import Tensor

        emb = rng.standard_normal((1, 5, 8))
        perm = np.array([3, 0, 4, 1, 2])
        z = tiny_model.encode(Tensor(emb)).data
        z_perm = tiny_model.encode(Tensor(emb[:, perm])).data
        np.testing.assert_allclose(z_perm, z[:, perm], atol=1e-12)

    def test_two_patch_desk_calculation(self):
        config = ModelConfig(
            patch_size=3, signal_length=6, d_model=4, ffn_dim=6,
            encoder_layers=1, decoder_layers=1, heads=2, dropout=0.0, mask_ratio=0.5, input_norm="none",
        )
        params = hand_set_params(config)
        model = FHRFormer(config, params, dtype=np.float64)
        signal = np.array([0.5, 0.52, 0.49, 0.6, 0.58, 0.61])
        masked = np.zeros(2, dtype=bool)
        z_expected, _ = desk_forward(params, config, signal, masked)
        with no_grad():
            out = model.forward(signal, masked)
        np.testing.assert_allclose(out.latent.data[0], z_expected, atol=1e-5)


class TestDecoder:
    def test_three_patch_desk_calculation(self):
        config = ModelConfig(
            patch_size=2, signal_length=6, d_model=4, ffn_dim=6,
            encoder_layers=1, decoder_layers=1, heads=2, dropout=0.0, mask_ratio=0.3, input_norm="none",
        )
        params = hand_set_params(config)
        model = FHRFormer(config, params, dtype=np.float64)
        signal = np.array([0.5, 0.55, 0.4, 0.45, 0.62, 0.6])
        masked = np.array([False, True, False])
        z_expected, preds_expected = desk_forward(params, config, signal, masked)
        out = model.forward(signal, masked)
        np.testing.assert_allclose(out.latent.data[0], z_expected, atol=1e-5)
        np.testing.assert_allclose(out.predictions.data[0], preds_expected, atol=1e-5)

    def test_two_layer_desk_calculation(self, rng):
        config = ModelConfig(
            patch_size=2, signal_length=8, d_model=4, ffn_dim=4,
            encoder_layers=2, decoder_layers=2, heads=2, dropout=0.0, mask_ratio=0.3, input_norm="none",
        )
        params = hand_set_params(config)
        signal = rng.random(8)
        masked = np.array([True, False, False, True])
        _, preds_expected = desk_forward(params, config, signal, masked)
        out = FHRFormer(config, params, dtype=np.float64).forward(signal, masked)
        np.testing.assert_allclose(out.predictions.data[0], preds_expected, atol=1e-5)

    def test_all_visible(self, tiny_model, rng):
        out = tiny_model.forward(rng.random(32), np.zeros(8, dtype=bool))
        assert out.predictions.shape == (1, 8, 4)
        assert np.isfinite(out.predictions.data).all()
        np.testing.assert_array_equal(out.reconstruction.data[0], out.patches.reshape(-1))

    def test_masked_positions_differ(self, tiny_model):
        signal = np.full(32, 0.5)
        masked = np.zeros(8, dtype=bool)
        masked[[1, 5]] = True
        preds = tiny_model.forward(signal, masked).predictions.data[0]
        assert not np.allclose(preds[1], preds[5])


def scaling_oracle(signal, masked, patch_size, kind="zscore"):
    """Loop over samples: (offset, scale) of the visible, non-zero ones."""
    values = [
        v for i, v in enumerate(signal)
        if not masked[i // patch_size] and v != 0
    ]
    if not values:
        return 0.0, 1.0
    if kind == "minmax":
        return min(values), max(max(values) - min(values), 1 / 240)
    mean = sum(values) / len(values)
    spread = math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))
    return mean, max(spread, 1 / 240)


class TestInputScaling:
    @pytest.fixture(params=["zscore", "minmax"])
    def pair(self, request):
        state = FHRFormer(TINY, seed=8, dtype=np.float64).state_dict()
        return (
            FHRFormer(TINY.replace(input_norm=request.param), state, dtype=np.float64),
            FHRFormer(TINY.replace(input_norm="none"), state, dtype=np.float64),
        )

    @pytest.mark.parametrize("kind", ["zscore", "minmax"])
    def test_statistics_match_loop(self, rng, kind):
        signals = rng.uniform(0.3, 0.7, (5, 32))
        signals[1, :9] = 0.0
        signals[2] = 0.5
        masked = rng.random((5, 8)) < 0.4
        masked[:, 7] = False
        offset, scale = input_scaling(patchify(signals, 4), masked, kind)
        for b in range(5):
            lo, rng_ = scaling_oracle(signals[b], masked[b], 4, kind)
            assert offset[b, 0, 0] == pytest.approx(lo)
            assert scale[b, 0, 0] == pytest.approx(rng_)

    def test_none_is_identity(self, rng):
        offset, scale = input_scaling(rng.random((2, 8, 4)), np.zeros((2, 8), bool), "none")
        assert not offset.any() and np.all(scale == 1)

    def test_wraps_unscaled_model(self, pair, rng):
        scaled_model, plain = pair
        signal = rng.uniform(0.4, 0.6, 32)
        masked = np.zeros(8, dtype=bool)
        masked[[2, 6]] = True
        lo, width = scaling_oracle(signal, masked, 4, scaled_model.config.input_norm)
        got = scaled_model.forward(signal, masked).predictions.data
        inner = plain.forward((signal - lo) / width, masked).predictions.data
        np.testing.assert_allclose(got, inner * width + lo, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.2, 3.0), st.floats(-0.3, 0.3), st.sampled_from(["zscore", "minmax"]))
    def test_affine_equivariance(self, gain, shift, kind):
        model = FHRFormer(TINY.replace(input_norm=kind), seed=8, dtype=np.float64)
        signal = 0.5 + 0.1 * np.sin(np.arange(32) / 3)
        masked = np.zeros(8, dtype=bool)
        masked[[1, 4]] = True
        base = model.forward(signal, masked).predictions.data
        moved = model.forward(gain * signal + shift, masked).predictions.data
        np.testing.assert_allclose(moved, gain * base + shift, atol=1e-9)

    def test_masked_content_cannot_leak(self, pair, rng):
        model, _ = pair
        signal = rng.uniform(0.4, 0.6, 32)
        masked = np.zeros(8, dtype=bool)
        masked[3] = True
        other = signal.copy()
        other[12:16] = [0.0, 0.99, 0.01, 0.7]
        a = model.forward(signal, masked).predictions.data
        b = model.forward(other, masked).predictions.data
        np.testing.assert_array_equal(a, b)

    def test_flat_signal_uses_range_floor(self, pair):
        model, _ = pair
        out = model.forward(np.full(32, 0.55), np.eye(8, dtype=bool)[2])
        assert np.isfinite(out.predictions.data).all()


class TestComposition:
    def test_visible_bit_identical(self, rng):
        model = FHRFormer(TINY.replace(dropout=0.2), seed=1)
        signals = rng.random((3, 32)).astype(np.float32)
        masked = np.zeros((3, 8), dtype=bool)
        masked[0, [0, 3]] = masked[1, 7] = masked[2, [1, 2, 4]] = True
        out = model.forward(signals, masked, training=True, rng=rng)
        rec = patchify(out.reconstruction.data, 4)
        patches = patchify(signals, 4)
        assert np.array_equal(rec[~masked], patches[~masked])
        np.testing.assert_array_equal(rec[masked], out.predictions.data[masked])

    def test_head_dense_oracle(self, tiny_model, rng):
        masked = np.zeros((1, 8), dtype=bool)
        masked[0, [2, 6]] = True
        patches = patchify(rng.random((1, 32)), 4)
        vis = tiny_model.embed_visible(patches, masked)
        latent = tiny_model.encode(vis.embedded, vis.valid)
        decoded = tiny_model.decode(latent, vis.index, vis.valid, masked)
        preds, _ = tiny_model.project_and_compose(decoded, masked, patches)
        W = tiny_model.params["head.weight"].data
        b = tiny_model.params["head.bias"].data
        expected = decoded.data[0] @ W.T + b
        np.testing.assert_allclose(preds.data[0], expected, atol=1e-6)

    def test_mask_shape_mismatch(self, tiny_model):
        with pytest.raises(DimensionError):
            tiny_model.forward(np.zeros(32), np.zeros(7, dtype=bool))


class TestBatching:
    def test_determinism(self, rng):
        signals = rng.random((2, 32))
        masked = rng.random((2, 8)) < 0.3
        masked[:, 0] = False
        a = FHRFormer(TINY, seed=4).forward(signals, masked).reconstruction.data
        b = FHRFormer(TINY, seed=4).forward(signals, masked).reconstruction.data
        assert np.array_equal(a, b)

    def test_batch_order_invariance(self, tiny_model, rng):
        signals = rng.random((4, 32))
        masked = np.zeros((4, 8), dtype=bool)
        masked[0, 1] = masked[1, [2, 3, 4]] = masked[2, 7] = masked[3, [0, 5]] = True
        order = np.array([2, 0, 3, 1])
        out = tiny_model.forward(signals, masked).reconstruction.data
        shuffled = tiny_model.forward(signals[order], masked[order]).reconstruction.data
        np.testing.assert_allclose(shuffled, out[order], atol=1e-12)

    def test_batch_matches_single(self, tiny_model, rng):
        signals = rng.random((3, 32))
        masked = np.zeros((3, 8), dtype=bool)
        masked[0, 1] = masked[1, [2, 3, 4, 5]] = masked[2, 7] = True
        batched = tiny_model.forward(signals, masked).predictions.data
        for s in range(3):
            single = tiny_model.forward(signals[s], masked[s]).predictions.data[0]
            np.testing.assert_allclose(batched[s], single, atol=1e-10)

    def test_arbitrary_positions(self, tiny_model, rng):
        out = tiny_model.forward(rng.random(32), np.eye(8, dtype=bool)[7], positions=np.arange(100, 108))
        assert np.isfinite(out.predictions.data).all()


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model = FHRFormer(TINY, seed=3)
        path = tmp_path / "m.fhrf"
        save_checkpoint(model, path)
        back = load_checkpoint(path)
        assert back.config == model.config
        for name, value in model.state_dict().items():
            assert np.array_equal(back.state_dict()[name], value)
        assert path.read_bytes()[:4] == b"FHRF"

    def test_bad_magic(self):
        blob = bytearray(encode_checkpoint(TINY, FHRFormer(TINY).state_dict()))
        blob[:4] = b"XXXX"
        with pytest.raises(DataError):
            decode_checkpoint(bytes(blob))

    @pytest.mark.parametrize("cut", [3, 20, -1])
    def test_truncated(self, cut):
        blob = encode_checkpoint(TINY, FHRFormer(TINY).state_dict())
        with pytest.raises(DataError):
            decode_checkpoint(blob[:cut])

    def test_load_state_dict_shape_check(self, tiny_model):
        state = tiny_model.state_dict()
        state["head.bias"] = np.zeros(5)
        with pytest.raises(DimensionError):
            tiny_model.load_state_dict(state)
