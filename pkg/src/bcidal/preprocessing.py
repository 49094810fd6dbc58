"""Causal bandpass filtering and rational-rate resampling.

The decoding chain downsamples each trial first (polyphase, with a causal
Hamming-windowed-sinc anti-alias FIR whose group delay is compensated) and
then applies a causal Butterworth bandpass at the new rate.  Filtering is
deliberately *not* zero-phase: a deployed decoder only sees past samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.signal

from .dataset import Session, Trial

__all__ = [
    "BandpassSpec",
    "FilterCoefficients",
    "ResampleSpec",
    "design_bandpass",
    "apply_filter",
    "resample_trial",
    "preprocess_session",
]


@dataclass(frozen=True)
class BandpassSpec:
    """Butterworth bandpass parameters.

    ``prototype_order`` is the analog lowpass prototype order; the bandpass
    transform doubles it, so the default gives a 4-pole digital filter.
    """

    sampling_rate_hz: float
    low_hz: float = 6.0
    high_hz: float = 32.0
    prototype_order: int = 2

    def __post_init__(self):
        if self.sampling_rate_hz <= 0:
            raise ValueError(f"sampling rate must be positive, got {self.sampling_rate_hz}")
        if not (0.0 < self.low_hz < self.high_hz):
            raise ValueError(
                f"band edges must satisfy 0 < low < high, got ({self.low_hz}, {self.high_hz})"
            )
        if self.high_hz >= self.sampling_rate_hz / 2.0:
            raise ValueError(
                f"high edge {self.high_hz} Hz must lie below Nyquist "
                f"{self.sampling_rate_hz / 2.0} Hz"
            )
        if self.prototype_order < 1:
            raise ValueError(f"prototype order must be >= 1, got {self.prototype_order}")


@dataclass(frozen=True, eq=False)
class FilterCoefficients:
    """Second-order-section cascade of a designed digital filter."""

    sections: np.ndarray  # shape (n_sections, 6), rows [b0 b1 b2 a0 a1 a2]
    sampling_rate_hz: float

    def __post_init__(self):
        sections = np.asarray(self.sections, dtype=float)
        if sections.ndim != 2 or sections.shape[1] != 6:
            raise ValueError(f"sections must have shape (n, 6), got {sections.shape}")
        object.__setattr__(self, "sections", sections)

    def pole_moduli(self) -> np.ndarray:
        """Modulus of every pole; all < 1 for a stable causal filter."""
        moduli = []
        for sec in self.sections:
            moduli.extend(np.abs(np.roots(sec[3:])))
        return np.asarray(moduli)


def design_bandpass(spec: BandpassSpec) -> FilterCoefficients:
    """Design the causal Butterworth bandpass as a stable SOS cascade.

    The analog prototype is frequency-prewarped at both band edges before
    the bilinear transform, which places the -3 dB points exactly on
    ``low_hz`` and ``high_hz``.
    """
    sos = scipy.signal.butter(
        spec.prototype_order,
        [spec.low_hz, spec.high_hz],
        btype="bandpass",
        output="sos",
        fs=spec.sampling_rate_hz,
    )
    coeffs = FilterCoefficients(sections=sos, sampling_rate_hz=spec.sampling_rate_hz)
    if np.any(coeffs.pole_moduli() >= 1.0):
        raise ValueError("designed filter is unstable (pole on or outside the unit circle)")
    return coeffs


def apply_filter(data: np.ndarray, coeffs: FilterCoefficients) -> np.ndarray:
    """Run the SOS cascade causally (zero initial state) along the last axis."""
    data = np.asarray(data, dtype=float)
    if not np.all(np.isfinite(data)):
        raise ValueError("input contains non-finite values")
    return scipy.signal.sosfilt(coeffs.sections, data, axis=-1)


@dataclass(frozen=True)
class ResampleSpec:
    """Rational-rate conversion parameters."""

    from_hz: float = 250.0
    to_hz: float = 128.0
    antialias_taps: int = 127
    antialias_cutoff_fraction: float = 0.9

    def __post_init__(self):
        if self.from_hz <= 0 or self.to_hz <= 0:
            raise ValueError("rates must be positive")
        if self.antialias_taps < 3 or self.antialias_taps % 2 == 0:
            raise ValueError(f"antialias_taps must be an odd integer >= 3, got {self.antialias_taps}")
        if not (0.0 < self.antialias_cutoff_fraction <= 1.0):
            raise ValueError(
                f"antialias_cutoff_fraction must be in (0, 1], got {self.antialias_cutoff_fraction}"
            )
        self.ratio()  # raises if irrational

    def ratio(self) -> Fraction:
        """Reduced p/q with p, q <= 1024."""
        frac = Fraction(self.to_hz / self.from_hz).limit_denominator(1024)
        if abs(float(frac) - self.to_hz / self.from_hz) > 1e-12:
            raise ValueError(
                f"rate ratio {self.to_hz}/{self.from_hz} is not a rational p/q with p, q <= 1024"
            )
        return frac


def _antialias_taps(spec: ResampleSpec) -> np.ndarray:
    """Hamming-windowed sinc lowpass at the input rate, unit DC gain."""
    cutoff_hz = spec.antialias_cutoff_fraction * min(spec.from_hz, spec.to_hz) / 2.0
    m = spec.antialias_taps
    n = np.arange(m) - (m - 1) / 2.0
    h = 2.0 * cutoff_hz / spec.from_hz * np.sinc(2.0 * cutoff_hz / spec.from_hz * n)
    h *= np.hamming(m)
    return h / h.sum()


def resample_trial(data: np.ndarray, spec: ResampleSpec) -> np.ndarray:
    """Resample channels x samples data from ``from_hz`` to ``to_hz``.

    The causal anti-alias FIR runs at the input rate; its group delay of
    (taps-1)/2 input samples is removed by zero-padding the tail and
    dropping the leading transient, so output samples stay time-aligned
    with the input.  Output length is ceil(n_samples * p / q).

    Parameters
    ----------
    data : ndarray, shape (n_channels, n_samples)
    spec : ResampleSpec

    Returns
    -------
    ndarray, shape (n_channels, ceil(n_samples * p / q))
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if not np.all(np.isfinite(data)):
        raise ValueError("input contains non-finite values")
    n_samples = data.shape[1]
    if n_samples < spec.antialias_taps:
        raise ValueError(
            f"need at least {spec.antialias_taps} samples, got {n_samples}"
        )
    frac = spec.ratio()
    p, q = frac.numerator, frac.denominator
    delay = (spec.antialias_taps - 1) // 2
    h = _antialias_taps(spec)

    padded = np.concatenate([data, np.zeros((data.shape[0], delay))], axis=1)
    filtered = scipy.signal.lfilter(h, [1.0], padded, axis=-1)[:, delay:]
    out = scipy.signal.resample_poly(filtered, p, q, axis=-1)

    n_out = math.ceil(n_samples * p / q)
    if out.shape[1] < n_out:  # pragma: no cover - resample_poly already rounds up
        out = np.concatenate([out, np.zeros((out.shape[0], n_out - out.shape[1]))], axis=1)
    return out[:, :n_out]


def preprocess_session(
    session: Session,
    resample: ResampleSpec | None,
    bandpass: BandpassSpec,
) -> Session:
    """Resample every trial (if requested) and then bandpass it causally.

    The bandpass spec must be stated at the post-resample rate.
    """
    if resample is not None:
        if session.sampling_rate_hz != resample.from_hz:
            raise ValueError(
                f"session rate {session.sampling_rate_hz} Hz does not match "
                f"resampler input rate {resample.from_hz} Hz"
            )
        rate = resample.to_hz
    else:
        rate = session.sampling_rate_hz
    if bandpass.sampling_rate_hz != rate:
        raise ValueError(
            f"bandpass is specified at {bandpass.sampling_rate_hz} Hz but the "
            f"data will be at {rate} Hz"
        )
    coeffs = design_bandpass(bandpass)
    trials = []
    for trial in session.trials:
        x = trial.data
        if resample is not None:
            x = resample_trial(x, resample)
        x = apply_filter(x, coeffs)
        trials.append(Trial(data=x, label=trial.label, index=trial.index))
    return Session(
        trials=tuple(trials),
        sampling_rate_hz=rate,
        channel_names=session.channel_names,
    )
