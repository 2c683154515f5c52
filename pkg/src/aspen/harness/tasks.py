"""Per-paradigm preprocessing presets and conversion of a split dataset into
model-ready arrays."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..dataset import EEGDataset
from ..errors import ConfigError
from ..model import ModelConfig
from ..signal import StftConfig, bandpass_filter, downsample, spectral_tensor, zscore_normalize
from ..training import SplitArrays
from .splits import SplitPlan

# split names used by the training protocol -> SplitPlan attribute
PROTOCOL_SPLITS = {"train": "train", "val": "val", "seen": "test1", "unseen": "test2"}


@dataclass(frozen=True)
class TaskPreset:
    name: str
    paradigm: str
    band: tuple[float, float]
    fs_out: Optional[float]  # None keeps the recording rate
    n_perseg: int
    n_overlap: int
    n_fft: int

    def output_fs(self, fs_in: float) -> float:
        return fs_in if self.fs_out is None else self.fs_out

    def stft_config(self, fs_in: float) -> StftConfig:
        return StftConfig(self.output_fs(fs_in), self.n_perseg, self.n_overlap, self.n_fft)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["band"] = list(self.band)
        return d


TASKS = {
    "ssvep": TaskPreset("ssvep", "ssvep", (6.0, 90.0), None, 128, 64, 128),
    "p300": TaskPreset("p300", "p300", (1.0, 24.0), 125.0, 64, 48, 128),
    "mi": TaskPreset("mi", "mi", (4.0, 40.0), 125.0, 128, 64, 128),
}


def get_task(name: str) -> TaskPreset:
    try:
        return TASKS[name]
    except KeyError:
        raise ConfigError(f"unknown task {name!r}; choose from {', '.join(TASKS)}") from None


def preprocess(ds: EEGDataset, preset: TaskPreset) -> EEGDataset:
    """Band-pass, optional integer decimation, then per-trial channel z-score."""
    low, high = preset.band
    x = bandpass_filter(ds.data.astype(np.float64), low, high, ds.fs)
    fs = ds.fs
    if preset.fs_out is not None and preset.fs_out != ds.fs:
        x = downsample(x, ds.fs, preset.fs_out)
        fs = preset.fs_out
    x = zscore_normalize(x)
    return ds.with_data(x.astype(np.float32), fs)


def split_arrays(ds: EEGDataset, plan: SplitPlan, cfg: StftConfig) -> dict[str, SplitArrays]:
    """Time-domain and power-spectrogram inputs for every protocol split."""
    if cfg.fs != ds.fs:
        raise ConfigError(f"STFT sampling rate {cfg.fs} differs from the data rate {ds.fs}")
    cfg.validate(ds.n_samples)
    spec = spectral_tensor(ds.data, cfg).astype(np.float32)
    out = {}
    for name, attr in PROTOCOL_SPLITS.items():
        idx = plan.indices(attr)
        out[name] = SplitArrays(ds.data[idx], spec[idx], ds.labels[idx])
    return out


def model_config_for(ds: EEGDataset, cfg: StftConfig, **overrides) -> ModelConfig:
    return ModelConfig(
        n_channels=ds.n_channels,
        n_samples=ds.n_samples,
        fs=ds.fs,
        n_freqs=cfg.n_freqs,
        n_frames=cfg.n_frames(ds.n_samples),
        n_classes=ds.n_classes,
        **overrides,
    )
