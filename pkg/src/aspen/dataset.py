"""In-memory container for a stack of labelled EEG epochs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .signal import Trial


@dataclass
class EEGDataset:
    data: np.ndarray  # (n, C, T) float32
    labels: np.ndarray  # (n,) int
    subjects: np.ndarray  # (n,) int
    sessions: np.ndarray  # (n,) int
    fs: float
    n_classes: int
    paradigm: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.subjects = np.asarray(self.subjects, dtype=np.int64)
        self.sessions = np.asarray(self.sessions, dtype=np.int64)
        if self.data.ndim != 3:
            raise ParameterError(f"epochs must be (n, C, T), got {self.data.shape}")
        n = self.data.shape[0]
        if not (len(self.labels) == len(self.subjects) == len(self.sessions) == n):
            raise ParameterError("labels, subjects and sessions must have one entry per epoch")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ParameterError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    @property
    def subject_ids(self) -> list[int]:
        return sorted(np.unique(self.subjects).tolist())

    def subset(self, idx) -> "EEGDataset":
        idx = np.asarray(idx)
        return EEGDataset(
            self.data[idx],
            self.labels[idx],
            self.subjects[idx],
            self.sessions[idx],
            self.fs,
            self.n_classes,
            self.paradigm,
            dict(self.meta),
        )

    def with_data(self, data: np.ndarray, fs: float | None = None) -> "EEGDataset":
        return EEGDataset(
            data, self.labels, self.subjects, self.sessions, self.fs if fs is None else fs,
            self.n_classes, self.paradigm, dict(self.meta),
        )

    def trials(self) -> list[Trial]:
        return [
            Trial(self.data[i], int(self.labels[i]), int(self.subjects[i]), int(self.sessions[i]), self.fs)
            for i in range(len(self))
        ]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)
