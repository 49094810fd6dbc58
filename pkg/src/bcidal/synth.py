"""Seeded synthetic sessions with planted, channel-localized mu-power drop.

Each trial is independent pink background noise per channel plus a
10 Hz-class oscillation on a small set of motor-area channels, spatially
blurred by a neighbor-graph mixing matrix.  Imagery trials (+1) carry the
oscillation at a fraction (1 - erd_depth) of the rest amplitude (-1), so
the class difference is a localized band-power decrease; that is the only
planted effect.

Randomness is drawn from counter-based Philox streams keyed by
(seed, purpose, trial, channel), so any subset of trials can be generated
in any order, or in parallel, without changing a single sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .dataset import Session, Trial, save_session

__all__ = [
    "CHANNEL_NAMES",
    "SynthSpec",
    "GroundTruth",
    "pink_noise",
    "noise_stream",
    "mixing_matrix",
    "generate_session",
    "save_synth_session",
    "load_ground_truth",
]

# frontal / central / parietal rows around the motor strip
CHANNEL_NAMES = ("F3", "Fz", "F4", "T3", "C3", "Cz", "C4", "T4", "P3", "Pz", "P4")

_NEIGHBORS = {
    "F3": ("Fz", "C3", "T3"),
    "Fz": ("F3", "F4", "Cz"),
    "F4": ("Fz", "C4", "T4"),
    "T3": ("F3", "C3", "P3"),
    "C3": ("F3", "T3", "Cz", "P3"),
    "Cz": ("Fz", "C3", "C4", "Pz"),
    "C4": ("F4", "Cz", "T4", "P4"),
    "T4": ("F4", "C4", "P4"),
    "P3": ("T3", "C3", "Pz"),
    "Pz": ("P3", "Cz", "P4"),
    "P4": ("Pz", "C4", "T4"),
}

# classic pink-approximation recursion; poles tuned so the white-to-output
# power response falls close to 1/f over three decades
_PINK_B = np.array([0.049922035, -0.095993537, 0.050612699, -0.004408786])
_PINK_A = np.array([1.0, -2.494956002, 2.017265875, -0.522189400])
_PINK_WARMUP = 1024


def _pink_gain() -> float:
    imp = np.zeros(1 << 15)
    imp[0] = 1.0
    h = lfilter(_PINK_B, _PINK_A, imp)
    return float(np.sqrt(np.sum(h * h)))


_PINK_GAIN = _pink_gain()

# oscillation amplitude relative to unit-variance noise, and the spread of
# the per-trial multiplicative amplitude jitter (mean exactly 1)
_MU_AMPLITUDE = 1.0
_JITTER_SIGMA = 0.4

_TAG_NOISE = 0
_TAG_PHASE = 1
_TAG_JITTER = 2
_TAG_SHUFFLE = 3


@dataclass(frozen=True)
class SynthSpec:
    """Generation parameters; identical specs give identical sessions.

    Parameters
    ----------
    n_channels : int
        11 uses the named montage; other counts fall back to a chain
        neighbor graph.
    fs_hz, trial_seconds : float
        Sampling rate and trial length; their product is the sample count.
    trials_per_class : int
        The session holds twice this many trials, classes exactly balanced.
    mu_freq_hz : float
        Oscillation frequency planted on the active channels.
    erd_depth : float
        Fractional amplitude reduction on imagery trials; 0 removes the
        class difference entirely, 1 silences the oscillation.
    active_channels : tuple of int
        Channels carrying the oscillation before mixing.
    mixing_spread : float
        Neighbor leakage strength in the mixing matrix I + spread * R.
    noise_scale : float
        Standard deviation of the per-channel pink background.
    seed : int
        Nonnegative 64-bit stream key.
    """

    n_channels: int = 11
    fs_hz: float = 250.0
    trial_seconds: float = 4.0
    trials_per_class: int = 30
    mu_freq_hz: float = 10.0
    erd_depth: float = 0.5
    active_channels: tuple = (4, 5)  # C3, Cz
    mixing_spread: float = 0.3
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_channels < 1:
            raise ValueError(f"n_channels must be >= 1, got {self.n_channels}")
        if self.fs_hz <= 0 or self.trial_seconds <= 0:
            raise ValueError("fs_hz and trial_seconds must be positive")
        if self.trials_per_class < 1:
            raise ValueError(f"trials_per_class must be >= 1, got {self.trials_per_class}")
        if not 0 < self.mu_freq_hz < self.fs_hz / 2:
            raise ValueError(
                f"mu_freq_hz must lie in (0, fs/2) = (0, {self.fs_hz / 2}), got {self.mu_freq_hz}"
            )
        if not 0.0 <= self.erd_depth <= 1.0:
            raise ValueError(f"erd_depth must lie in [0, 1], got {self.erd_depth}")
        active = tuple(int(c) for c in self.active_channels)
        if any(not 0 <= c < self.n_channels for c in active):
            raise ValueError(
                f"active_channels {active} outside [0, {self.n_channels})"
            )
        if self.mixing_spread < 0:
            raise ValueError(f"mixing_spread must be >= 0, got {self.mixing_spread}")
        if self.noise_scale <= 0:
            raise ValueError(f"noise_scale must be positive, got {self.noise_scale}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a nonnegative 64-bit integer, got {self.seed}")
        object.__setattr__(self, "active_channels", active)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_samples(self) -> int:
        return int(round(self.fs_hz * self.trial_seconds))

    @property
    def channel_names(self) -> tuple:
        if self.n_channels == len(CHANNEL_NAMES):
            return CHANNEL_NAMES
        return tuple(f"ch{i:02d}" for i in range(self.n_channels))


@dataclass(frozen=True)
class GroundTruth:
    """What was planted: the active channels and each trial's amplitude."""

    active_channels: tuple
    per_trial_mu_amplitude: tuple


def noise_stream(seed: int, *key) -> np.random.Generator:
    """Counter-based generator for one (purpose, trial, channel) cell."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


def pink_noise(n_samples: int, stream: np.random.Generator) -> np.ndarray:
    """Zero-mean 1/f-shaped noise with unit long-run variance.

    A seeded white sequence is shaped by a fixed recursion whose power
    response approximates 1/f, then scaled by the recursion's impulse
    energy.  A warmup prefix is generated and dropped so the filter state
    is past its startup transient.  The returned window is centered
    exactly: a 1/f process piles variance near DC, so raw draw means
    wander far from zero on any realistic trial length.
    """
    if n_samples < 256:
        raise ValueError(f"need at least 256 samples, got {n_samples}")
    white = stream.standard_normal(n_samples + _PINK_WARMUP)
    shaped = lfilter(_PINK_B, _PINK_A, white)
    out = shaped[_PINK_WARMUP:] / _PINK_GAIN
    return out - out.mean()


def mixing_matrix(n_channels: int, spread: float, channel_names=None) -> np.ndarray:
    """I + spread * R with R the row-normalized neighbor graph.

    The 11-channel montage uses its hand-coded scalp adjacency; any other
    channel count uses a chain (each channel leaks into its immediate
    neighbors), which keeps the construction defined for small test cases.
    """
    if channel_names is None:
        channel_names = (
            CHANNEL_NAMES if n_channels == len(CHANNEL_NAMES)
            else tuple(f"ch{i:02d}" for i in range(n_channels))
        )
    adj = np.zeros((n_channels, n_channels))
    if n_channels == len(CHANNEL_NAMES) and tuple(channel_names) == CHANNEL_NAMES:
        pos = {name: i for i, name in enumerate(CHANNEL_NAMES)}
        for name, neighbors in _NEIGHBORS.items():
            for other in neighbors:
                adj[pos[name], pos[other]] = 1.0
    else:
        for i in range(n_channels - 1):
            adj[i, i + 1] = adj[i + 1, i] = 1.0
    row_sums = adj.sum(axis=1, keepdims=True)
    np.divide(adj, row_sums, out=adj, where=row_sums > 0)
    return np.eye(n_channels) + spread * adj


def generate_session(spec: SynthSpec):
    """Build one session plus its ground truth.

    Returns
    -------
    (Session, GroundTruth)
        Trials in seeded-shuffled chronological order, labels balanced;
        byte-identical for identical specs.
    """
    n_trials = 2 * spec.trials_per_class
    n_samp = spec.n_samples
    if n_samp < 256:
        raise ValueError(
            f"trial of {n_samp} samples is too short for the noise and filter supports"
        )
    ordered = np.array([1] * spec.trials_per_class + [-1] * spec.trials_per_class)
    perm = noise_stream(spec.seed, _TAG_SHUFFLE).permutation(n_trials)
    labels = ordered[perm]

    mix = mixing_matrix(spec.n_channels, spec.mixing_spread, spec.channel_names)
    t = np.arange(n_samp) / spec.fs_hz
    trials = []
    amplitudes = []
    for i in range(n_trials):
        phase = noise_stream(spec.seed, _TAG_PHASE, i).uniform(0.0, 2.0 * np.pi)
        z = noise_stream(spec.seed, _TAG_JITTER, i).standard_normal()
        jitter = float(np.exp(_JITTER_SIGMA * z - 0.5 * _JITTER_SIGMA**2))
        depth = 1.0 - spec.erd_depth if labels[i] == 1 else 1.0
        amp = _MU_AMPLITUDE * depth * jitter
        amplitudes.append(amp)

        sources = np.zeros((spec.n_channels, n_samp))
        wave = amp * np.sin(2.0 * np.pi * spec.mu_freq_hz * t + phase)
        for ch in spec.active_channels:
            sources[ch] = wave
        data = mix @ sources
        for ch in range(spec.n_channels):
            stream = noise_stream(spec.seed, _TAG_NOISE, i, ch)
            data[ch] += spec.noise_scale * pink_noise(n_samp, stream)
        trials.append(Trial(data=data, label=int(labels[i]), index=i))

    session = Session(
        trials=tuple(trials),
        sampling_rate_hz=spec.fs_hz,
        channel_names=spec.channel_names,
    )
    truth = GroundTruth(
        active_channels=tuple(spec.active_channels),
        per_trial_mu_amplitude=tuple(amplitudes),
    )
    return session, truth


def save_synth_session(session: Session, truth: GroundTruth, directory) -> None:
    """Write the session directory plus `ground_truth.json` beside it."""
    directory = Path(directory)
    save_session(session, directory)
    payload = {
        "active_channels": [int(c) for c in truth.active_channels],
        "per_trial_mu_amplitude": [float(a) for a in truth.per_trial_mu_amplitude],
    }
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    (directory / "ground_truth.json").write_text(text)


def load_ground_truth(directory) -> GroundTruth:
    payload = json.loads((Path(directory) / "ground_truth.json").read_text())
    return GroundTruth(
        active_channels=tuple(int(c) for c in payload["active_channels"]),
        per_trial_mu_amplitude=tuple(float(a) for a in payload["per_trial_mu_amplitude"]),
    )
