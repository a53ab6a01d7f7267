import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fhrformer.errors import DataError, ParameterError
from fhrformer.prep import (
    DopplerConfig,
    PreparedSignal,
    RawRecord,
    correct_doppler_artifacts,
    denormalize,
    fit_length,
    interpolate_gaps,
    normalize,
    prepare,
    read_raw_csv,
    write_raw_csv,
)


def two_point_oracle(samples, observed):
    """Fill each gap from its flanking observations, one sample at a time."""
    out = list(samples)
    idx = [i for i, o in enumerate(observed) if o]
    for i in range(len(out)):
        if observed[i]:
            continue
        left = [j for j in idx if j < i]
        right = [j for j in idx if j > i]
        if not left:
            out[i] = samples[right[0]]
        elif not right:
            out[i] = samples[left[-1]]
        else:
            a, b = left[-1], right[0]
            out[i] = samples[a] + (samples[b] - samples[a]) * (i - a) / (b - a)
    return np.array(out)


class TestDoppler:
    def test_clean_constant_unchanged(self):
        raw = RawRecord(np.full(200, 140.0))
        corrected, artifacts, observed = correct_doppler_artifacts(raw)
        np.testing.assert_array_equal(corrected.samples, raw.samples)
        assert not artifacts.any()
        assert observed.all()

    @pytest.mark.parametrize("factor", [2.0, 0.5])
    def test_doubled_or_halved_segment_restored(self, factor):
        samples = np.full(200, 140.0)
        samples[90:100] = 140.0 * factor
        corrected, artifacts, _ = correct_doppler_artifacts(RawRecord(samples))
        assert np.abs(corrected.samples - 140.0).max() <= 2.0
        np.testing.assert_array_equal(np.flatnonzero(artifacts), np.arange(90, 100))

    def test_zeros_marked_missing_and_untouched(self):
        samples = np.full(100, 130.0)
        samples[40:60] = 0.0
        corrected, artifacts, observed = correct_doppler_artifacts(RawRecord(samples))
        assert (corrected.samples[40:60] == 0).all()
        assert not artifacts[40:60].any()
        assert not observed[40:60].any() and observed[:40].all()

    def test_out_of_range_marked_missing(self):
        samples = np.full(100, 130.0)
        samples[10] = 45.0
        samples[20] = 230.0
        _, _, observed = correct_doppler_artifacts(RawRecord(samples))
        assert not observed[10] and not observed[20]

    def test_thresholds_are_configurable(self):
        samples = np.full(100, 140.0)
        samples[50:55] = 280.0
        narrow = DopplerConfig(double_band=(2.5, 3.0))
        _, artifacts, observed = correct_doppler_artifacts(RawRecord(samples), narrow)
        assert not artifacts.any()
        assert not observed[50:55].any()

    def test_empty_record(self):
        with pytest.raises(DataError):
            correct_doppler_artifacts(RawRecord(np.array([])))

    def test_negative_rejected(self):
        with pytest.raises(DataError):
            RawRecord(np.array([120.0, -1.0]))


class TestInterpolateGaps:
    def test_simple_line(self):
        out = interpolate_gaps(np.array([10.0, 0, 0, 16.0]), np.array([1, 0, 0, 1]))
        np.testing.assert_allclose(out, [10, 12, 14, 16])

    def test_no_gaps_identity(self, rng):
        x = rng.uniform(100, 160, 50)
        np.testing.assert_array_equal(interpolate_gaps(x, np.ones(50)), x)

    def test_edges_extend_nearest(self):
        out = interpolate_gaps(np.array([0, 0, 5.0, 7.0, 0]), np.array([0, 0, 1, 1, 0]))
        np.testing.assert_array_equal(out, [5, 5, 5, 7, 7])

    def test_all_missing(self):
        with pytest.raises(DataError):
            interpolate_gaps(np.zeros(5), np.zeros(5))

    def test_random_matches_oracle(self, rng):
        x = rng.uniform(60, 200, 300)
        observed = rng.random(300) > 0.4
        observed[0] = False
        np.testing.assert_allclose(interpolate_gaps(x, observed), two_point_oracle(x, observed), rtol=0, atol=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(
        arrays(np.float64, 40, elements=st.floats(50, 210)),
        arrays(np.bool_, 40),
    )
    def test_observed_positions_bit_identical(self, x, observed):
        if not observed.any():
            return
        out = interpolate_gaps(x, observed)
        np.testing.assert_array_equal(out[observed], x[observed])


class TestFitLength:
    def test_longer_keeps_tail(self):
        x = np.arange(8000, dtype=float)
        values, mask = fit_length(x, np.ones(8000), 7200)
        np.testing.assert_array_equal(values, x[800:])
        assert mask.all()

    def test_exact_identity(self, rng):
        x = rng.uniform(size=7200)
        values, mask = fit_length(x, np.ones(7200), 7200)
        np.testing.assert_array_equal(values, x)

    def test_shorter_left_pads(self):
        values, mask = fit_length(np.full(7000, 120.0), np.ones(7000), 7200)
        assert (values[:200] == 0).all() and (mask[:200] == 0).all()
        assert (values[200:] == 120).all() and mask[200:].all()

    def test_bad_length(self):
        with pytest.raises(ParameterError):
            fit_length(np.ones(5), np.ones(5), 0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 300), st.integers(1, 300))
    def test_always_length_l(self, n, length):
        values, mask = fit_length(np.ones(n), np.ones(n), length)
        assert values.shape == mask.shape == (length,)


class TestNormalize:
    @pytest.mark.parametrize("bpm, expected", [(0.0, 0.0), (240.0, 1.0), (120.0, 0.5)])
    def test_examples(self, bpm, expected):
        assert normalize(np.array([bpm]))[0] == expected

    @pytest.mark.parametrize("bad", [-1.0, 241.0, np.nan])
    def test_out_of_range(self, bad):
        with pytest.raises(DataError):
            normalize(np.array([120.0, bad]))

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, 20, elements=st.floats(0, 240)))
    def test_round_trip(self, x):
        assert np.abs(denormalize(normalize(x)) - x).max() <= 1e-6


class TestPrepare:
    def test_pipeline_bounds_and_mask(self, rng):
        samples = rng.uniform(110, 160, 500)
        samples[100:130] = 0
        samples[300] = 400
        sig = prepare(RawRecord(samples, "ep"), length=600)
        assert sig.values.shape == sig.missing_mask.shape == (600,)
        assert np.isfinite(sig.values).all()
        assert sig.values.min() >= 0 and sig.values.max() <= 1
        assert sig.pad_length == 100
        assert not sig.missing_mask[200:230].any()
        assert sig.missing_mask[300 + 100] == 0
        assert sig.episode_id == "ep"

    def test_mismatched_prepared_signal(self):
        with pytest.raises(DataError):
            PreparedSignal(np.zeros(4), np.zeros(3))

    def test_csv_round_trip(self, tmp_path, rng):
        record = RawRecord(np.round(rng.uniform(100, 170, 64), 3), "case7")
        path = tmp_path / "case7.csv"
        write_raw_csv(record, path)
        back = read_raw_csv(path)
        np.testing.assert_allclose(back.samples, record.samples, atol=5e-4)
        assert back.episode_id == "case7"

    def test_csv_malformed(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("sample_index,fhr_bpm\n0,120\n1,abc\n")
        with pytest.raises(DataError):
            read_raw_csv(path)
