"""Preprocessing and STFT spectral frontend.

All functions are pure: they never modify their inputs and keep no state.
Arrays are channel-major, ``(C, T)`` for one trial or ``(..., C, T)`` for
stacks of trials; filtering and framing always run along the last axis.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import signal as sps

from .errors import ParameterError

log = logging.getLogger(__name__)

OVERLAP_RATIOS = (0.50, 0.75, 0.9375)
FFT_POOL_BASE = (256, 512, 1024, 2048)
MIN_NPERSEG = 32


@dataclass(frozen=True)
class Trial:
    data: np.ndarray  # (C, T)
    label: int
    subject: int
    session: int
    fs: float

    def __post_init__(self):
        if self.data.ndim != 2 or min(self.data.shape) < 1:
            raise ParameterError(f"trial data must be a non-empty (C, T) matrix, got {self.data.shape}")


@dataclass(frozen=True)
class StftConfig:
    fs: float
    n_perseg: int
    n_overlap: int
    n_fft: int
    # overlap ratio the config was generated from, if any; only used for identifiers
    ratio: Optional[float] = field(default=None, compare=False)

    @property
    def hop(self) -> int:
        return self.n_perseg - self.n_overlap

    @property
    def n_freqs(self) -> int:
        return self.n_fft // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.n_perseg) // self.hop + 1

    def validate(self, n_samples: Optional[int] = None) -> "StftConfig":
        if self.fs <= 0:
            raise ParameterError(f"fs must be positive, got {self.fs}")
        if self.n_perseg < 1:
            raise ParameterError(f"n_perseg must be >= 1, got {self.n_perseg}")
        if not 0 <= self.n_overlap < self.n_perseg:
            raise ParameterError(
                f"need 0 <= n_overlap < n_perseg, got n_overlap={self.n_overlap}, n_perseg={self.n_perseg}"
            )
        if self.n_fft < self.n_perseg:
            raise ParameterError(f"n_fft ({self.n_fft}) must be >= n_perseg ({self.n_perseg})")
        if n_samples is not None and n_samples < self.n_perseg:
            raise ParameterError(f"signal of {n_samples} samples is shorter than n_perseg={self.n_perseg}")
        return self

    @property
    def identifier(self) -> str:
        return config_identifier(self)

    def to_dict(self) -> dict:
        return {"fs": self.fs, "n_perseg": self.n_perseg, "n_overlap": self.n_overlap, "n_fft": self.n_fft}


@dataclass
class Spectrogram:
    power: np.ndarray  # (C, F, T')
    freq_axis: np.ndarray
    time_axis: np.ndarray


@dataclass
class SearchSpace:
    configs: list[StftConfig]
    ids: list[str]
    # (description, violated constraint) for every candidate that was dropped
    pruned: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.configs)

    def __iter__(self):
        return iter(zip(self.ids, self.configs))


# ---------------------------------------------------------------- preprocessing


def bandpass_filter(signal: np.ndarray, low: float, high: float, fs: float, order: int = 4) -> np.ndarray:
    """Zero-phase Butterworth band-pass along the last axis."""
    if not 0 < low < high < fs / 2:
        raise ParameterError(f"band edges must satisfy 0 < low < high < fs/2, got ({low}, {high}) at fs={fs}")
    sos = sps.butter(order, [low, high], btype="bandpass", fs=fs, output="sos")
    x = np.asarray(signal, dtype=np.float64)
    try:
        return sps.sosfiltfilt(sos, x, axis=-1)
    except ValueError as exc:
        raise ParameterError(f"signal too short for the filter warm-up: {exc}") from exc


def zscore_normalize(trial: np.ndarray) -> np.ndarray:
    """Per-channel z-score with population variance.

    Constant channels map to zeros (with a warning) instead of NaN.
    """
    x = np.asarray(trial, dtype=np.float64)
    mean = x.mean(axis=-1, keepdims=True)
    std = x.std(axis=-1, keepdims=True)
    flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    if np.any(flat):
        warnings.warn(f"{int(flat.sum())} zero-variance channel(s) set to zero", RuntimeWarning, stacklevel=2)
    out = (x - mean) / np.where(flat, 1.0, std)
    out[np.broadcast_to(flat, out.shape)] = 0.0
    return out


def downsample(signal: np.ndarray, fs_in: float, fs_out: float) -> np.ndarray:
    """Integer decimation with a zero-phase anti-alias low-pass at 0.8x the new Nyquist."""
    if fs_out <= 0 or fs_out > fs_in:
        raise ParameterError(f"need 0 < fs_out <= fs_in, got fs_in={fs_in}, fs_out={fs_out}")
    ratio = fs_in / fs_out
    q = int(round(ratio))
    if abs(ratio - q) > 1e-9:
        raise ParameterError(f"only integer decimation is supported, got ratio {ratio}")
    x = np.asarray(signal, dtype=np.float64)
    if q == 1:
        return x.copy()
    sos = sps.butter(8, 0.8 * fs_out / 2, btype="lowpass", fs=fs_in, output="sos")
    try:
        y = sps.sosfiltfilt(sos, x, axis=-1)
    except ValueError as exc:
        raise ParameterError(f"signal too short for the anti-alias filter: {exc}") from exc
    return np.ascontiguousarray(y[..., ::q][..., : x.shape[-1] // q])


# ---------------------------------------------------------------- STFT


def hann_window(n: int) -> np.ndarray:
    # periodic Hann
    m = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * m / n))


def stft(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """One-sided STFT of ``x`` along its last axis, shape ``(..., F, T')``.

    Only frames that fit entirely inside the signal are emitted; there is no
    centering, padding or scaling.
    """
    x = np.asarray(x)
    cfg.validate(x.shape[-1])
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.n_perseg, axis=-1)[..., :: cfg.hop, :]
    spec = np.fft.rfft(frames * hann_window(cfg.n_perseg), n=cfg.n_fft, axis=-1)
    return np.swapaxes(spec, -1, -2)


def power_spectrogram(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    return z.real**2 + z.imag**2


def stft_axes(cfg: StftConfig, n_samples: int) -> tuple[np.ndarray, np.ndarray]:
    freqs = np.arange(cfg.n_freqs) * cfg.fs / cfg.n_fft
    times = (np.arange(cfg.n_frames(n_samples)) * cfg.hop + cfg.n_perseg / 2) / cfg.fs
    return freqs, times


def spectral_tensor(data: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Power spectrograms for a ``(..., C, T)`` array -> ``(..., C, F, T')``."""
    return power_spectrogram(stft(data, cfg))


def trial_to_spectral_tensor(trial: Trial | np.ndarray, cfg: StftConfig) -> Spectrogram:
    data = trial.data if isinstance(trial, Trial) else np.asarray(trial)
    if data.ndim != 2:
        raise ParameterError(f"expected a (C, T) trial, got shape {data.shape}")
    freqs, times = stft_axes(cfg, data.shape[-1])
    return Spectrogram(power=spectral_tensor(data, cfg), freq_axis=freqs, time_axis=times)


def stft_resolution(cfg: StftConfig) -> tuple[float, float]:
    """(frequency resolution in Hz, frame step in seconds)."""
    return cfg.fs / cfg.n_fft, (cfg.n_perseg - cfg.n_overlap) / cfg.fs


# ---------------------------------------------------------------- search space


def _format_percent(ratio: float) -> str:
    pct = round(100.0 * ratio, 6)
    return f"{pct:g}"


def config_identifier(cfg: StftConfig, ratio: Optional[float] = None) -> str:
    if ratio is None:
        ratio = cfg.ratio if cfg.ratio is not None else cfg.n_overlap / cfg.n_perseg
    return f"nperseg{cfg.n_perseg}_ov{_format_percent(ratio)}_nfft{cfg.n_fft}"


def _unique(values: Sequence[int]) -> list[int]:
    seen: list[int] = []
    for v in values:
        if v not in seen:
            seen.append(v)
    return seen


def window_candidates(n_perseg0: int, trial_len: int) -> list[int]:
    return _unique([max(MIN_NPERSEG, n_perseg0 // 2), n_perseg0, min(trial_len, 2 * n_perseg0)])


def fft_candidates(n_perseg: int, n_fft0: int) -> list[int]:
    pool = sorted(set([2 ** math.ceil(math.log2(n_perseg)), *FFT_POOL_BASE, n_fft0]))
    valid = [n for n in pool if n >= n_perseg]
    if n_fft0 in valid:
        i = valid.index(n_fft0)
        start = min(max(i - 1, 0), max(len(valid) - 3, 0))
        chosen = valid[start : start + 3]
    else:
        chosen = valid[:3]
    while len(chosen) < 3:
        chosen.append(2 * max(chosen) if chosen else 2 ** math.ceil(math.log2(n_perseg)))
    return chosen


def generate_stft_search_space(default_cfg: StftConfig, trial_len: int) -> SearchSpace:
    """Task-aware grid of up to 27 STFT configurations around a default.

    Window lengths are half/default/double the default (floored at 32 and
    capped at the trial length), overlaps come from ``OVERLAP_RATIOS`` and
    three FFT sizes are picked around the default FFT size. Candidates that
    break a constraint are recorded in ``SearchSpace.pruned`` instead of
    raising.
    """
    default_cfg.validate()
    configs: list[StftConfig] = []
    ids: list[str] = []
    pruned: list[tuple[str, str]] = []
    seen: set[tuple[int, int, int]] = set()

    for n_perseg in window_candidates(default_cfg.n_perseg, trial_len):
        if n_perseg > trial_len:
            pruned.append((f"nperseg{n_perseg}", f"n_perseg > trial_len ({n_perseg} > {trial_len})"))
            continue
        for r in OVERLAP_RATIOS:
            n_overlap = int(math.floor(r * n_perseg))
            for n_fft in fft_candidates(n_perseg, default_cfg.n_fft):
                cfg = StftConfig(default_cfg.fs, n_perseg, n_overlap, n_fft, ratio=r)
                ident = config_identifier(cfg, r)
                if n_overlap >= n_perseg:
                    pruned.append((ident, f"n_overlap >= n_perseg ({n_overlap} >= {n_perseg})"))
                    continue
                if n_fft < n_perseg:
                    pruned.append((ident, f"n_fft < n_perseg ({n_fft} < {n_perseg})"))
                    continue
                key = (n_perseg, n_overlap, n_fft)
                if key in seen:
                    pruned.append((ident, "duplicate (n_perseg, n_overlap, n_fft)"))
                    continue
                seen.add(key)
                configs.append(cfg)
                ids.append(ident)

    for desc, reason in pruned:
        log.info("pruned STFT config %s: %s", desc, reason)
    return SearchSpace(configs=configs, ids=ids, pruned=pruned)
