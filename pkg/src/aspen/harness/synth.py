"""Synthetic SSVEP, P300 and motor-imagery epochs with controllable
between-subject variability (phase, latency, amplitude) and noise.

Every generator is a pure function of ``(spec, seed)``. Ground-truth
per-trial parameters are returned in ``dataset.meta`` so tests can check
that the variability knobs are honored.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..dataset import EEGDataset
from ..errors import ConfigError

PARADIGMS = ("ssvep", "p300", "mi")
MI_VARIANTS = ("standard", "phase_coded")

_DEFAULT_SAMPLES = {"ssvep": 250, "p300": 250, "mi": 1000}
_DEFAULT_CLASSES = {"ssvep": 4, "p300": 2, "mi": 2}
_DEFAULT_NOISE = {"ssvep": 1.0, "p300": 2.0, "mi": 2.0}
_DEFAULT_JITTER = {"ssvep": 0.0, "p300": 0.05, "mi": 0.01}
SSVEP_FREQUENCIES = (8.0, 10.0, 12.0, 15.0, 9.0, 11.0, 13.0, 14.0)


@dataclass
class SynthSpec:
    paradigm: str = "ssvep"
    n_subjects: int = 12
    n_sessions: int = 2
    trials_per_class: int = 40
    n_channels: int = 8
    n_samples: Optional[int] = None
    fs: float = 250.0
    n_classes: Optional[int] = None
    # between-subject variability
    phase_offset_range: float = 2 * math.pi  # SSVEP: subject phase ~ U[0, range)
    latency_jitter: Optional[float] = None  # seconds; P300 / MI subject shift ~ U[-j, j]
    amplitude_range: tuple[float, float] = (0.6, 1.4)
    noise_sigma: Optional[float] = None
    # SSVEP
    frequencies: Optional[tuple[float, ...]] = None
    harmonic_amplitudes: tuple[float, ...] = (1.0, 0.5)
    # P300
    imbalance_ratio: float = 5.0
    deflection_amplitude: float = 2.0
    deflection_latency: float = 0.3
    deflection_width: float = 0.08
    # MI
    mi_variant: str = "standard"
    erd_depth: float = 0.6  # fraction of mu amplitude removed at full ERD
    mu_amplitude: float = 1.5
    burst_amplitude: float = 2.0

    def __post_init__(self):
        if self.n_samples is None:
            self.n_samples = _DEFAULT_SAMPLES.get(self.paradigm, 250)
        if self.n_classes is None:
            self.n_classes = _DEFAULT_CLASSES.get(self.paradigm, 2)
        if self.noise_sigma is None:
            self.noise_sigma = _DEFAULT_NOISE.get(self.paradigm, 1.0)
        if self.latency_jitter is None:
            self.latency_jitter = _DEFAULT_JITTER.get(self.paradigm, 0.0)
        self.amplitude_range = tuple(self.amplitude_range)
        self.harmonic_amplitudes = tuple(self.harmonic_amplitudes)
        if self.frequencies is not None:
            self.frequencies = tuple(self.frequencies)

    @property
    def class_frequencies(self) -> tuple[float, ...]:
        if self.frequencies is not None:
            return self.frequencies
        return SSVEP_FREQUENCIES[: self.n_classes]

    @property
    def duration(self) -> float:
        return self.n_samples / self.fs

    def validate(self) -> "SynthSpec":
        if self.paradigm not in PARADIGMS:
            raise ConfigError(f"unknown paradigm {self.paradigm!r}; choose from {', '.join(PARADIGMS)}")
        counts = {
            "n_subjects": self.n_subjects,
            "n_sessions": self.n_sessions,
            "trials_per_class": self.trials_per_class,
            "n_channels": self.n_channels,
            "n_samples": self.n_samples,
        }
        bad = [k for k, v in counts.items() if v < 1]
        if bad:
            raise ConfigError(f"synthetic counts must be >= 1: {', '.join(bad)}")
        if self.fs <= 0 or self.noise_sigma < 0:
            raise ConfigError("fs must be positive and noise_sigma non-negative")
        lo, hi = self.amplitude_range
        if not 0 < lo <= hi:
            raise ConfigError(f"amplitude_range must satisfy 0 < low <= high, got {self.amplitude_range}")
        if not 0 <= self.latency_jitter < self.duration:
            raise ConfigError(f"latency jitter {self.latency_jitter}s must be in [0, trial length {self.duration}s)")
        if self.paradigm == "ssvep":
            if self.n_classes < 2 or len(self.class_frequencies) < self.n_classes:
                raise ConfigError(f"need {self.n_classes} SSVEP frequencies, have {len(self.class_frequencies)}")
            top = max(self.class_frequencies) * len(self.harmonic_amplitudes)
            if top >= self.fs / 2:
                raise ConfigError(f"harmonic at {top} Hz is above the Nyquist frequency {self.fs / 2} Hz")
        elif self.paradigm == "p300":
            if self.n_classes != 2:
                raise ConfigError("P300 is a binary target / non-target task")
            if self.imbalance_ratio < 1:
                raise ConfigError(f"imbalance ratio must be >= 1, got {self.imbalance_ratio}")
            end = self.deflection_latency + self.latency_jitter + 3 * self.deflection_width
            start = self.deflection_latency - self.latency_jitter - 3 * self.deflection_width
            if start < 0 or end > self.duration:
                raise ConfigError(
                    f"deflection window [{start:.3f}, {end:.3f}]s does not fit in a {self.duration}s trial"
                )
        else:
            if self.n_classes not in (2, 4):
                raise ConfigError("motor imagery supports 2 or 4 classes")
            if self.mi_variant not in MI_VARIANTS:
                raise ConfigError(f"unknown MI variant {self.mi_variant!r}")
            if self.n_channels < 2 * self.n_classes:
                raise ConfigError(
                    f"{self.n_channels} channels cannot hold {self.n_classes} lateralized groups of two"
                )
            if self.duration < 1.0:
                raise ConfigError("motor-imagery trials must be at least 1 s long")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("amplitude_range", "harmonic_amplitudes", "frequencies"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class _Layout:
    labels: np.ndarray
    subjects: np.ndarray
    sessions: np.ndarray
    blocks: list[tuple[int, int, np.ndarray]] = field(default_factory=list)  # (subject, session, trial idx)


def _layout(spec: SynthSpec, per_class: list[int], rng: np.random.Generator) -> _Layout:
    """Trial bookkeeping: subject-major, session-minor, classes interleaved
    in a seeded random presentation order."""
    labels, subjects, sessions, blocks = [], [], [], []
    start = 0
    for s in range(spec.n_subjects):
        for sess in range(spec.n_sessions):
            block = np.repeat(np.arange(len(per_class)), per_class)
            block = block[rng.permutation(block.size)]
            labels.append(block)
            subjects.append(np.full(block.size, s))
            sessions.append(np.full(block.size, sess))
            blocks.append((s, sess, np.arange(start, start + block.size)))
            start += block.size
    return _Layout(np.concatenate(labels), np.concatenate(subjects), np.concatenate(sessions), blocks)


def _expect(spec: SynthSpec, paradigm: str) -> None:
    if spec.paradigm != paradigm:
        raise ConfigError(f"spec is for {spec.paradigm!r}, generator expects {paradigm!r}")
    spec.validate()


def _time(spec: SynthSpec) -> np.ndarray:
    return np.arange(spec.n_samples) / spec.fs


def _finish(spec: SynthSpec, layout: _Layout, data: np.ndarray, meta: dict) -> EEGDataset:
    meta = {"synth": spec.to_dict(), **meta}
    return EEGDataset(
        data.astype(np.float32), layout.labels, layout.subjects, layout.sessions, spec.fs,
        spec.n_classes, spec.paradigm, meta,
    )


def synth_ssvep(spec: SynthSpec, seed: int) -> EEGDataset:
    """Sum of class-frequency harmonics with a per-subject (plus fixed
    per-channel) phase, per-subject amplitude, white noise."""
    _expect(spec, "ssvep")
    rng = np.random.default_rng(seed)
    S, C = spec.n_subjects, spec.n_channels
    subj_phase = rng.uniform(0.0, spec.phase_offset_range, S)
    subj_amp = rng.uniform(*spec.amplitude_range, S)
    chan_phase = np.linspace(0.0, math.pi / 8, C)  # small travelling-wave lag across the montage
    chan_gain = np.linspace(0.5, 1.0, C)  # occipital channels last and strongest
    layout = _layout(spec, [spec.trials_per_class] * spec.n_classes, rng)
    t = _time(spec)
    freqs = np.asarray(spec.class_frequencies)
    data = np.empty((len(layout.labels), C, spec.n_samples))
    for s, _, idx in layout.blocks:
        f = freqs[layout.labels[idx]][:, None, None]
        phase = subj_phase[s] + chan_phase[None, :, None]
        clean = sum(
            a * np.sin(2 * math.pi * (h + 1) * f * t + phase) for h, a in enumerate(spec.harmonic_amplitudes)
        )
        data[idx] = subj_amp[s] * chan_gain[:, None] * clean
        data[idx] += spec.noise_sigma * rng.standard_normal((idx.size, C, spec.n_samples))
    meta = {
        "subject_phase": subj_phase.tolist(),
        "subject_amplitude": subj_amp.tolist(),
        "trial_phase": subj_phase[layout.subjects].tolist(),
        "frequencies": freqs.tolist(),
    }
    return _finish(spec, layout, data, meta)


def p300_deflection(t: np.ndarray, latency: float, width: float) -> np.ndarray:
    """Unit-height Gaussian bump centred on ``latency``."""
    return np.exp(-0.5 * ((t - latency) / width) ** 2)


def synth_p300(spec: SynthSpec, seed: int) -> EEGDataset:
    """Rare targets carry a low-frequency positive deflection on posterior
    channels at a subject-specific latency; non-targets are background only.
    Both classes share random-phase alpha activity and white noise."""
    _expect(spec, "p300")
    rng = np.random.default_rng(seed)
    S, C = spec.n_subjects, spec.n_channels
    subj_latency = spec.deflection_latency + rng.uniform(-spec.latency_jitter, spec.latency_jitter, S)
    subj_amp = rng.uniform(*spec.amplitude_range, S)
    chan_gain = np.zeros(C)
    posterior = np.arange(C // 2, C)
    chan_gain[posterior] = np.linspace(0.6, 1.0, posterior.size)
    n_neg = int(round(spec.imbalance_ratio * spec.trials_per_class))
    layout = _layout(spec, [n_neg, spec.trials_per_class], rng)
    t = _time(spec)
    data = np.empty((len(layout.labels), C, spec.n_samples))
    for s, _, idx in layout.blocks:
        n = idx.size
        alpha_phase = rng.uniform(0, 2 * math.pi, (n, 1, 1))
        alpha = 0.5 * np.sin(2 * math.pi * 10.0 * t + alpha_phase)
        data[idx] = alpha + spec.noise_sigma * rng.standard_normal((n, C, spec.n_samples))
        bump = spec.deflection_amplitude * subj_amp[s] * p300_deflection(t, subj_latency[s], spec.deflection_width)
        targets = idx[layout.labels[idx] == 1]
        data[targets] += chan_gain[:, None] * bump
    meta = {
        "subject_latency": subj_latency.tolist(),
        "subject_amplitude": subj_amp.tolist(),
        "trial_latency": subj_latency[layout.subjects].tolist(),
    }
    return _finish(spec, layout, data, meta)


def mi_envelope(t: np.ndarray, start: float, stop: float) -> np.ndarray:
    """Raised-cosine window that is 1 on the middle of [start, stop]."""
    env = np.zeros_like(t)
    inside = (t >= start) & (t <= stop)
    env[inside] = np.sin(math.pi * (t[inside] - start) / (stop - start)) ** 2
    return env


def mi_groups(n_channels: int, n_classes: int) -> list[np.ndarray]:
    """Disjoint channel groups, one per class (left / right hemisphere for two
    classes)."""
    size = n_channels // n_classes
    return [np.arange(k * size, (k + 1) * size) for k in range(n_classes)]


def synth_mi(spec: SynthSpec, seed: int) -> EEGDataset:
    """Motor imagery.

    ``standard``: every channel carries a random-phase mu rhythm at a
    subject-specific frequency; class k desynchronizes (attenuates) mu on
    channel group k under a smooth task envelope.

    ``phase_coded``: no ERD. Every trial adds the same train of short,
    time-locked Gabor transients (one per second after the first), except
    that their carrier phase is set by the class (2*pi*k/K) and their timing
    by a per-subject latency shift. Class-conditional power spectrograms are
    (near-)identical while the class-mean waveforms differ.
    """
    _expect(spec, "mi")
    rng = np.random.default_rng(seed)
    S, C, K = spec.n_subjects, spec.n_channels, spec.n_classes
    mu_freq = rng.uniform(9.0, 12.0, S)
    subj_amp = rng.uniform(*spec.amplitude_range, S)
    subj_latency = rng.uniform(-spec.latency_jitter, spec.latency_jitter, S)
    layout = _layout(spec, [spec.trials_per_class] * K, rng)
    t = _time(spec)
    env = mi_envelope(t, 0.1 * spec.duration, 0.9 * spec.duration)
    groups = mi_groups(C, K)
    onsets = np.arange(1.0, spec.duration - 0.5 + 1e-9, 1.0)
    data = np.empty((len(layout.labels), C, spec.n_samples))
    for s, _, idx in layout.blocks:
        n = idx.size
        labels = layout.labels[idx]
        phase = rng.uniform(0, 2 * math.pi, (n, C, 1))
        mu = spec.mu_amplitude * subj_amp[s] * np.sin(2 * math.pi * mu_freq[s] * t + phase)
        beta = 0.3 * np.sin(2 * math.pi * 20.0 * t + rng.uniform(0, 2 * math.pi, (n, C, 1)))
        if spec.mi_variant == "standard":
            gain = np.ones((n, C, spec.n_samples))
            for k, g in enumerate(groups):
                rows = np.nonzero(labels == k)[0]
                gain[np.ix_(rows, g)] = 1.0 - spec.erd_depth * env
            mu = mu * gain
            extra = 0.0
        else:
            theta = 2 * math.pi * labels[:, None, None] / K
            extra = spec.burst_amplitude * subj_amp[s] * gabor_train(t - subj_latency[s], onsets, theta)
        data[idx] = mu + beta + extra + spec.noise_sigma * rng.standard_normal((n, C, spec.n_samples))
    meta = {
        "variant": spec.mi_variant,
        "subject_mu_frequency": mu_freq.tolist(),
        "subject_amplitude": subj_amp.tolist(),
        "subject_latency": subj_latency.tolist(),
        "groups": [g.tolist() for g in groups],
    }
    return _finish(spec, layout, data, meta)


def gabor_train(t: np.ndarray, onsets: np.ndarray, phase, freq: float = 5.0, width: float = 0.06) -> np.ndarray:
    """Sum of Gaussian-windowed cosines centred on ``onsets`` with carrier phase ``phase``."""
    out = 0.0
    for t0 in onsets:
        out = out + np.exp(-0.5 * ((t - t0) / width) ** 2) * np.cos(2 * math.pi * freq * (t - t0) + phase)
    return out


GENERATORS = {"ssvep": synth_ssvep, "p300": synth_p300, "mi": synth_mi}


def synthesize(spec: SynthSpec, seed: int) -> EEGDataset:
    spec.validate()
    return GENERATORS[spec.paradigm](spec, seed)
