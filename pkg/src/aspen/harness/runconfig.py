"""Flat run configuration shared by every CLI entry point.

A run config is a single JSON object of scalar (or list) values. Keys come
from four groups: run plumbing, training, model hyper-parameters and the
synthetic generator. Anything else is rejected so typos cannot silently
fall back to defaults.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from ..errors import ConfigError
from ..fusion import STRATEGIES
from ..signal import StftConfig
from ..training import TrainConfig
from .synth import SynthSpec
from .tasks import TaskPreset, get_task

RUN_DEFAULTS = {
    "task": "ssvep",
    "data": None,
    "out": "results",
    "model": "aspen",
    "fusion": "multiplicative",
    "n_perseg": None,
    "n_overlap": None,
    "n_fft": None,
    "seeds": [44, 36, 10],
    "split_seed": 44,
    "seen_fraction": 0.75,
    "synth_seed": 44,
    "workers": 1,
}
MODEL_DEFAULTS = {
    "d": 64,
    "dropout_cnn": 0.25,
    "dropout_global": 0.3,
    "bilinear_rank": 16,
    "heads": 4,
    "tau": 1.0,
    "dtype": "float32",
}
TRAIN_DEFAULTS = {k: v for k, v in TrainConfig().to_dict().items() if k not in ("seeds",) and k not in MODEL_DEFAULTS}
SYNTH_DEFAULTS = {k: v for k, v in SynthSpec().to_dict().items() if k != "paradigm"}
SYNTH_DEFAULTS.update(n_samples=None, n_classes=None, noise_sigma=None, latency_jitter=None)  # per paradigm

_GROUPS = (RUN_DEFAULTS, MODEL_DEFAULTS, TRAIN_DEFAULTS, SYNTH_DEFAULTS)
DEFAULTS = {k: v for group in _GROUPS for k, v in group.items()}
assert len(DEFAULTS) == sum(map(len, _GROUPS)), "config key collision"


class RunConfig:
    def __init__(self, values: Optional[dict] = None):
        self.values = dict(DEFAULTS)
        if values:
            self.update(values)

    def update(self, overrides: dict) -> "RunConfig":
        unknown = sorted(set(overrides) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        for k, v in overrides.items():
            if v is not None:
                self.values[k] = list(v) if isinstance(v, tuple) else v
        return self

    def __getitem__(self, key):
        return self.values[key]

    def copy(self, **overrides) -> "RunConfig":
        return RunConfig(dict(self.values)).update(overrides)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        return cls(data)

    def to_dict(self) -> dict:
        return dict(sorted(self.values.items()))

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    # ---------------------------------------------------------------- views

    @property
    def task(self) -> TaskPreset:
        return get_task(self["task"])

    @property
    def paradigm(self) -> str:
        return self.task.paradigm

    def train_config(self) -> TrainConfig:
        d = {k: self[k] for k in TRAIN_DEFAULTS}
        d.update(dropout_cnn=self["dropout_cnn"], dropout_global=self["dropout_global"], seeds=tuple(self["seeds"]))
        return TrainConfig.from_dict(d)

    def model_overrides(self) -> dict:
        d = {k: self[k] for k in MODEL_DEFAULTS}
        d["fusion"] = self["fusion"]
        return d

    def synth_spec(self) -> SynthSpec:
        d = {k: self[k] for k in SYNTH_DEFAULTS}
        return SynthSpec(paradigm=self.paradigm, **d)

    def stft_config(self, fs: float) -> StftConfig:
        base = self.task.stft_config(fs)
        n_perseg = self["n_perseg"] or base.n_perseg
        n_overlap = self["n_overlap"] if self["n_overlap"] is not None else (
            base.n_overlap if self["n_perseg"] is None else n_perseg // 2
        )
        n_fft = self["n_fft"] or max(base.n_fft, n_perseg)
        return StftConfig(base.fs, int(n_perseg), int(n_overlap), int(n_fft))

    def validate(self) -> "RunConfig":
        self.task
        if self["model"] not in ("aspen", "spen"):
            raise ConfigError(f"model must be 'aspen' or 'spen', got {self['model']!r}")
        if self["fusion"] not in STRATEGIES:
            raise ConfigError(f"unknown fusion {self['fusion']!r}; choose from {', '.join(STRATEGIES)}")
        if not self["seeds"] or not all(isinstance(s, int) for s in self["seeds"]):
            raise ConfigError("seeds must be a non-empty list of integers")
        if not 0 < self["seen_fraction"] < 1:
            raise ConfigError("seen_fraction must be in (0, 1)")
        if int(self["workers"]) < 1:
            raise ConfigError("workers must be >= 1")
        # checked for every strategy since the fusion ablation builds all of them
        if not 1 <= self["bilinear_rank"] <= self["d"]:
            raise ConfigError(f"bilinear_rank must be in [1, d={self['d']}], got {self['bilinear_rank']}")
        if self["heads"] < 1 or self["d"] % self["heads"]:
            raise ConfigError(f"heads ({self['heads']}) must divide d ({self['d']})")
        self.train_config().validate()
        fs_out = self.task.output_fs(self["fs"])
        n_samples = None
        if self["data"] is None:
            # synthetic trials: the post-resampling length is known up front
            n_samples = int(round(self.synth_spec().n_samples * fs_out / self["fs"]))
        try:
            self.stft_config(fs_out).validate(n_samples)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self
