"""Tests for the seeded synthetic session generator."""

import numpy as np
import pytest
from numpy.testing import assert_array_almost_equal, assert_array_equal
from scipy.signal import welch

from bcidal.synth import (
    CHANNEL_NAMES,
    GroundTruth,
    SynthSpec,
    generate_session,
    load_ground_truth,
    mixing_matrix,
    noise_stream,
    pink_noise,
    save_synth_session,
)


class TestSpecValidation:
    def test_defaults_are_valid(self):
        spec = SynthSpec()
        assert spec.n_samples == 1000
        assert spec.channel_names == CHANNEL_NAMES
        assert spec.active_channels == (4, 5)

    def test_sample_count_rounds(self):
        assert SynthSpec(fs_hz=128.0, trial_seconds=2.0).n_samples == 256

    def test_mu_freq_above_nyquist(self):
        with pytest.raises(ValueError, match="mu_freq_hz"):
            SynthSpec(mu_freq_hz=125.0)

    def test_erd_depth_out_of_range(self):
        with pytest.raises(ValueError, match="erd_depth"):
            SynthSpec(erd_depth=1.5)
        with pytest.raises(ValueError, match="erd_depth"):
            SynthSpec(erd_depth=-0.1)

    def test_active_channel_out_of_bounds(self):
        with pytest.raises(ValueError, match="active_channels"):
            SynthSpec(active_channels=(4, 11))

    def test_negative_spread(self):
        with pytest.raises(ValueError, match="mixing_spread"):
            SynthSpec(mixing_spread=-0.2)

    def test_nonpositive_noise_scale(self):
        with pytest.raises(ValueError, match="noise_scale"):
            SynthSpec(noise_scale=0.0)

    def test_negative_seed(self):
        with pytest.raises(ValueError, match="seed"):
            SynthSpec(seed=-1)

    def test_zero_trials_per_class(self):
        with pytest.raises(ValueError, match="trials_per_class"):
            SynthSpec(trials_per_class=0)

    def test_zero_channels(self):
        with pytest.raises(ValueError, match="n_channels"):
            SynthSpec(n_channels=0)

    def test_too_short_trial_rejected_at_generation(self):
        spec = SynthSpec(trial_seconds=0.5)  # 125 samples
        with pytest.raises(ValueError, match="too short"):
            generate_session(spec)

    def test_small_montage_gets_generic_names(self):
        assert SynthSpec(n_channels=3, active_channels=(1,)).channel_names == (
            "ch00",
            "ch01",
            "ch02",
        )


class TestPinkNoise:
    def test_deterministic_per_stream_key(self):
        a = pink_noise(512, noise_stream(7, 0, 3, 2))
        b = pink_noise(512, noise_stream(7, 0, 3, 2))
        assert_array_equal(a, b)

    def test_seeds_decorrelate(self):
        a = pink_noise(512, noise_stream(7, 0))
        b = pink_noise(512, noise_stream(8, 0))
        assert np.max(np.abs(a - b)) > 0.1

    def test_draws_are_centered(self):
        for seed in range(6):
            x = pink_noise(15000, noise_stream(seed, 0))
            assert abs(x.mean()) < 1e-12

    def test_unit_variance(self):
        # 60 s draws at 250 Hz; the gain normalization targets unit power
        for seed in range(6):
            x = pink_noise(15000, noise_stream(seed, 0))
            assert 0.9 < x.var() < 1.1

    def test_spectral_slope_near_minus_one(self):
        for seed in range(6):
            x = pink_noise(15000, noise_stream(seed, 0))
            f, p = welch(x, fs=250.0, nperseg=4096)
            band = (f >= 1.0) & (f <= 40.0)
            slope = np.polyfit(np.log10(f[band]), np.log10(p[band]), 1)[0]
            assert -1.3 < slope < -0.7

    def test_too_few_samples(self):
        with pytest.raises(ValueError, match="256"):
            pink_noise(255, noise_stream(0, 0))


class TestMixingMatrix:
    def test_unit_diagonal(self):
        m = mixing_matrix(11, 0.3)
        assert_array_equal(np.diag(m), np.ones(11))

    def test_montage_neighbor_rows(self):
        m = mixing_matrix(11, 0.3)
        # C3 (index 4) leaks from F3, T3, Cz, P3 equally
        row = m[4].copy()
        row[4] = 0.0
        expected = np.zeros(11)
        for j in (0, 3, 5, 8):
            expected[j] = 0.3 / 4
        assert_array_almost_equal(row, expected, decimal=15)
        # F3 (index 0) has three neighbors: Fz, T3, C3
        row = m[0].copy()
        row[0] = 0.0
        expected = np.zeros(11)
        for j in (1, 3, 4):
            expected[j] = 0.3 / 3
        assert_array_almost_equal(row, expected, decimal=15)

    def test_rows_sum_to_one_plus_spread(self):
        m = mixing_matrix(11, 0.25)
        assert_array_almost_equal(m.sum(axis=1), np.full(11, 1.25), decimal=14)

    def test_zero_spread_is_identity(self):
        assert_array_equal(mixing_matrix(11, 0.0), np.eye(11))

    def test_chain_fallback(self):
        m = mixing_matrix(5, 0.4)
        expected = np.eye(5)
        expected[0, 1] = expected[4, 3] = 0.4  # endpoints have one neighbor
        for i in (1, 2, 3):
            expected[i, i - 1] = expected[i, i + 1] = 0.2
        assert_array_almost_equal(m, expected, decimal=15)


class TestGenerateSession:
    def test_default_spec_shapes(self):
        session, truth = generate_session(SynthSpec())
        assert len(session.trials) == 60
        assert session.sampling_rate_hz == 250.0
        assert session.channel_names == CHANNEL_NAMES
        for trial in session.trials:
            assert trial.data.shape == (11, 1000)
        assert truth.active_channels == (4, 5)
        assert len(truth.per_trial_mu_amplitude) == 60

    def test_classes_exactly_balanced(self):
        session, _ = generate_session(SynthSpec())
        labels = np.array([t.label for t in session.trials])
        assert np.sum(labels == 1) == 30
        assert np.sum(labels == -1) == 30

    def test_label_order_is_shuffled(self):
        session, _ = generate_session(SynthSpec())
        labels = [t.label for t in session.trials]
        assert labels != [1] * 30 + [-1] * 30

    def test_identical_specs_identical_sessions(self):
        first, truth_a = generate_session(SynthSpec(seed=5))
        second, truth_b = generate_session(SynthSpec(seed=5))
        assert truth_a == truth_b
        for ta, tb in zip(first.trials, second.trials):
            assert ta.label == tb.label
            assert_array_equal(ta.data, tb.data)

    def test_seed_changes_data(self):
        first, _ = generate_session(SynthSpec(seed=5))
        second, _ = generate_session(SynthSpec(seed=6))
        assert np.max(np.abs(first.trials[0].data - second.trials[0].data)) > 0.1

    def test_full_depth_silences_imagery(self):
        session, truth = generate_session(SynthSpec(seed=3, erd_depth=1.0))
        amps = np.array(truth.per_trial_mu_amplitude)
        labels = np.array([t.label for t in session.trials])
        assert np.all(amps[labels == 1] == 0.0)
        assert np.all(amps[labels == -1] > 0.0)

    def test_planted_amplitude_ratio(self):
        # jitter is mean-one, so class-mean amplitudes stand in ratio
        # (1 - erd_depth) up to sampling noise
        session, truth = generate_session(SynthSpec(seed=5))
        amps = np.array(truth.per_trial_mu_amplitude)
        labels = np.array([t.label for t in session.trials])
        ratio = amps[labels == 1].mean() / amps[labels == -1].mean()
        assert abs(ratio - 0.5) < 0.1

    def test_zero_depth_equalizes_amplitudes(self):
        session, truth = generate_session(SynthSpec(seed=5, erd_depth=0.0))
        amps = np.array(truth.per_trial_mu_amplitude)
        labels = np.array([t.label for t in session.trials])
        ratio = amps[labels == 1].mean() / amps[labels == -1].mean()
        assert abs(ratio - 1.0) < 0.15

    def test_mu_band_power_gap(self):
        # squared-amplitude contrast: the imagery/rest band-power ratio
        # should sit near (1 - erd_depth)^2, i.e. a 75% drop at depth 0.5;
        # a light noise floor keeps the measured gap from being diluted
        spec = SynthSpec(seed=5, noise_scale=0.3)
        session, truth = generate_session(spec)

        def band_power(x):
            f, p = welch(x, fs=spec.fs_hz, nperseg=256)
            sel = (f >= 8.0) & (f <= 13.0)
            return p[sel].sum()

        for ch in truth.active_channels:
            mi = np.mean(
                [band_power(t.data[ch]) for t in session.trials if t.label == 1]
            )
            rest = np.mean(
                [band_power(t.data[ch]) for t in session.trials if t.label == -1]
            )
            gap = 1.0 - mi / rest
            assert 0.60 < gap < 0.90

    def test_inactive_channels_carry_leakage_only(self):
        # with no mixing, the oscillation stays on the active channels;
        # remote channels are pure pink noise with no 10 Hz line
        spec = SynthSpec(seed=2, mixing_spread=0.0, noise_scale=0.3)
        session, _ = generate_session(spec)

        def line_power(x):
            f, p = welch(x, fs=spec.fs_hz, nperseg=512)
            sel = (f >= 9.0) & (f <= 11.0)
            rest = (f >= 1.0) & (f <= 40.0) & ~sel
            return p[sel].sum() / p[rest].sum()

        active = np.mean([line_power(t.data[4]) for t in session.trials])
        remote = np.mean([line_power(t.data[1]) for t in session.trials])
        assert active > 10 * remote


class TestSaveLoad:
    def test_byte_identical_reruns(self, tmp_path):
        spec = SynthSpec(seed=9, trials_per_class=5)
        for name in ("a", "b"):
            session, truth = generate_session(spec)
            save_synth_session(session, truth, tmp_path / name)
        for fname in ("trials.csv", "labels.csv", "session.json", "ground_truth.json"):
            assert (tmp_path / "a" / fname).read_bytes() == (
                tmp_path / "b" / fname
            ).read_bytes(), fname

    def test_seed_changes_bytes(self, tmp_path):
        for name, seed in (("a", 9), ("b", 10)):
            session, truth = generate_session(SynthSpec(seed=seed, trials_per_class=5))
            save_synth_session(session, truth, tmp_path / name)
        assert (tmp_path / "a" / "trials.csv").read_bytes() != (
            tmp_path / "b" / "trials.csv"
        ).read_bytes()

    def test_ground_truth_round_trip(self, tmp_path):
        session, truth = generate_session(SynthSpec(seed=4, trials_per_class=3))
        save_synth_session(session, truth, tmp_path / "s")
        loaded = load_ground_truth(tmp_path / "s")
        assert isinstance(loaded, GroundTruth)
        assert loaded == truth
