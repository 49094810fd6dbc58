"""Bandpass design and rational resampling against independent oracles."""

import numpy as np
import pytest

from bcidal.dataset import Session, Trial
from bcidal.preprocessing import (
    BandpassSpec,
    ResampleSpec,
    apply_filter,
    design_bandpass,
    preprocess_session,
    resample_trial,
)


def sos_gain(sections, freq_hz, fs):
    """|H| of the cascade at one frequency, by direct polynomial evaluation."""
    z = np.exp(2j * np.pi * freq_hz / fs)
    h = 1.0 + 0j
    for b0, b1, b2, a0, a1, a2 in sections:
        h *= (b0 + b1 / z + b2 / z**2) / (a0 + a1 / z + a2 / z**2)
    return abs(h)


def analog_butter_bandpass_gain(freq_hz, low_hz, high_hz, order, fs):
    """Analytic magnitude the bilinear design must realize.

    The digital response at frequency f equals the analog prototype's
    response at the prewarped frequency 2 fs tan(pi f / fs); the bandpass
    transform maps s to (s^2 + w1 w2) / (s (w2 - w1)).
    """
    warp = lambda f: 2.0 * fs * np.tan(np.pi * f / fs)
    w1, w2 = warp(low_hz), warp(high_hz)
    s = 1j * warp(freq_hz)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (s * s + w1 * w2) / (s * (w2 - w1))
    # Butterworth lowpass prototype: |H(ju)|^2 = 1 / (1 + u^(2 order))
    return float(1.0 / np.sqrt(1.0 + np.abs(u) ** (2 * order)))


class TestBandpassSpec:
    def test_rejects_inverted_edges(self):
        with pytest.raises(ValueError):
            BandpassSpec(sampling_rate_hz=128.0, low_hz=30.0, high_hz=6.0)

    def test_rejects_edge_at_nyquist(self):
        with pytest.raises(ValueError, match="Nyquist"):
            BandpassSpec(sampling_rate_hz=128.0, low_hz=6.0, high_hz=64.0)


class TestDesignBandpass:
    def setup_method(self):
        self.spec = BandpassSpec(sampling_rate_hz=128.0)
        self.coeffs = design_bandpass(self.spec)

    def test_band_edge_gain_is_half_power(self):
        freqs = np.linspace(1.0, 63.0, 400)
        gains = np.array([sos_gain(self.coeffs.sections, f, 128.0) for f in freqs])
        peak = gains.max()
        for edge in (6.0, 32.0):
            g = sos_gain(self.coeffs.sections, edge, 128.0) / peak
            assert abs(g - 0.7071) < 0.02

    def test_dc_and_nyquist_blocked(self):
        assert sos_gain(self.coeffs.sections, 0.0, 128.0) <= 1e-10
        assert sos_gain(self.coeffs.sections, 64.0, 128.0) <= 1e-10

    def test_matches_analytic_prewarped_response(self):
        for f in np.linspace(0.5, 63.5, 101):
            expected = analog_butter_bandpass_gain(f, 6.0, 32.0, 2, 128.0)
            got = sos_gain(self.coeffs.sections, f, 128.0)
            assert abs(got - expected) < 1e-8, f"mismatch at {f} Hz"

    def test_all_poles_inside_unit_circle(self):
        assert np.all(self.coeffs.pole_moduli() < 1.0)

    def test_magnitude_monotone_outside_band(self):
        low = np.array([sos_gain(self.coeffs.sections, f, 128.0)
                        for f in np.arange(1.0, 6.0 + 1e-9)])
        high = np.array([sos_gain(self.coeffs.sections, f, 128.0)
                         for f in np.arange(32.0, 64.0 + 1e-9)])
        assert np.all(np.diff(low) > 0)
        assert np.all(np.diff(high) < 0)


class TestApplyFilter:
    def setup_method(self):
        self.coeffs = design_bandpass(BandpassSpec(sampling_rate_hz=128.0))

    def test_zero_in_zero_out(self):
        out = apply_filter(np.zeros((3, 50)), self.coeffs)
        assert np.all(out == 0.0)

    def test_linearity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 200))
        np.testing.assert_allclose(apply_filter(3.5 * x, self.coeffs),
                                   3.5 * apply_filter(x, self.coeffs),
                                   atol=1e-12)

    def test_impulse_matches_direct_recursion(self):
        # transposed direct-form II per section, chained, plain Python
        x = np.zeros(64)
        x[0] = 1.0
        signal = x
        for b0, b1, b2, _, a1, a2 in self.coeffs.sections:
            out = np.zeros_like(signal)
            s1 = s2 = 0.0
            for i, v in enumerate(signal):
                out[i] = b0 * v + s1
                s1 = b1 * v - a1 * out[i] + s2
                s2 = b2 * v - a2 * out[i]
            signal = out
        got = apply_filter(x[None, :], self.coeffs)[0]
        np.testing.assert_allclose(got, signal, atol=1e-12)

    def test_rejects_nan(self):
        bad = np.zeros((1, 50))
        bad[0, 3] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            apply_filter(bad, self.coeffs)

    def test_channel_permutation_commutes(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 150))
        perm = np.array([2, 0, 3, 1])
        np.testing.assert_array_equal(apply_filter(x, self.coeffs)[perm],
                                      apply_filter(x[perm], self.coeffs))


class TestResampleSpec:
    def test_rejects_even_taps(self):
        with pytest.raises(ValueError, match="odd"):
            ResampleSpec(antialias_taps=128)

    def test_rejects_irrational_ratio(self):
        with pytest.raises(ValueError, match="rational"):
            ResampleSpec(from_hz=250.0, to_hz=128.0000001)


class TestResampleTrial:
    def test_output_length(self):
        out = resample_trial(np.zeros((2, 250)), ResampleSpec())
        assert out.shape == (2, 128)

    def test_constant_passthrough(self):
        out = resample_trial(np.ones((1, 500)), ResampleSpec())[0]
        # the 127-tap antialias FIR smears about 63 input samples (~32
        # output samples) into each edge; judge only past the transient
        interior = out[40:-40]
        np.testing.assert_allclose(interior, 1.0, atol=1e-3)

    def test_sine_rms_preserved(self):
        t = np.arange(1000) / 250.0
        x = np.sin(2 * np.pi * 10.0 * t)[None, :]
        y = resample_trial(x, ResampleSpec())[0]
        rms_in = np.sqrt(np.mean(x[0, 100:-100] ** 2))
        rms_out = np.sqrt(np.mean(y[50:-50] ** 2))
        assert abs(rms_out - rms_in) / rms_in < 0.01

    def test_too_short_input(self):
        with pytest.raises(ValueError, match="at least"):
            resample_trial(np.zeros((1, 100)), ResampleSpec())


class TestPreprocessSession:
    def make(self, rate=250.0, n_samples=1000):
        rng = np.random.default_rng(7)
        trials = [Trial(data=rng.standard_normal((3, n_samples)), label=(-1) ** i,
                        index=i) for i in range(4)]
        return Session(trials=trials, sampling_rate_hz=rate,
                       channel_names=("a", "b", "c"))

    def test_chain_output_rate_and_shape(self):
        out = preprocess_session(self.make(), ResampleSpec(),
                                 BandpassSpec(sampling_rate_hz=128.0))
        assert out.sampling_rate_hz == 128.0
        assert out.trials[0].data.shape == (3, 512)
        assert out.channel_names == ("a", "b", "c")

    def test_rate_mismatch_rejected(self):
        with pytest.raises(ValueError, match="does not match"):
            preprocess_session(self.make(rate=200.0), ResampleSpec(),
                               BandpassSpec(sampling_rate_hz=128.0))

    def test_bandpass_rate_must_match_output(self):
        with pytest.raises(ValueError, match="bandpass"):
            preprocess_session(self.make(), ResampleSpec(),
                               BandpassSpec(sampling_rate_hz=250.0))
