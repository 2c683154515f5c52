"""Temporal and spectral streams, the fused ASPEN classifier and standalone SPEN."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError
from .fusion import STRATEGIES, Fusion, build_fusion
from .nn import ops
from .nn.layers import (
    AvgPool2d,
    BatchNorm,
    Conv2d,
    DepthwiseConv2d,
    Dropout,
    Linear,
    Module,
    SEBlock,
    SeparableConv2d,
)
from .nn.tensor import Tensor

DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass
class TemporalStreamConfig:
    temporal_kernel: Optional[int] = None  # None -> fs / 2 samples
    f1: int = 8
    depth: int = 2
    separable_kernel: int = 16
    pool1: int = 4
    pool2: int = 8


@dataclass
class SpectralStreamConfig:
    channels: tuple[int, int] = (16, 32)
    kernel: int = 3
    se_reduction: int = 8
    pool: int = 2


@dataclass
class ModelConfig:
    n_channels: int
    n_samples: int
    fs: float
    n_freqs: int
    n_frames: int
    n_classes: int
    fusion: str = "multiplicative"
    d: int = 64
    temporal: TemporalStreamConfig = field(default_factory=TemporalStreamConfig)
    spectral: SpectralStreamConfig = field(default_factory=SpectralStreamConfig)
    dropout_cnn: float = 0.25
    dropout_global: float = 0.3
    bilinear_rank: int = 16
    heads: int = 4
    tau: float = 1.0
    dtype: str = "float32"

    @property
    def n_outputs(self) -> int:
        return 1 if self.n_classes == 2 else self.n_classes

    @property
    def temporal_kernel(self) -> int:
        k = self.temporal.temporal_kernel
        return int(self.fs // 2) if k is None else int(k)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["spectral"]["channels"] = list(self.spectral.channels)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["temporal"] = TemporalStreamConfig(**d.get("temporal", {}))
        spec = dict(d.get("spectral", {}))
        if "channels" in spec:
            spec["channels"] = tuple(spec["channels"])
        d["spectral"] = SpectralStreamConfig(**spec)
        return cls(**d)

    def validate(self) -> "ModelConfig":
        if self.n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")
        if self.fusion not in STRATEGIES:
            raise ConfigError(f"unknown fusion {self.fusion!r}")
        if self.d < 1:
            raise ConfigError("feature dimension d must be positive")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}")
        t = self.temporal
        if self.temporal_kernel > self.n_samples or t.separable_kernel > self.n_samples // t.pool1:
            raise ConfigError(f"trial of {self.n_samples} samples too short for the temporal kernels")
        if self.n_samples // t.pool1 // t.pool2 < 1:
            raise ConfigError(f"trial of {self.n_samples} samples too short for pooling {t.pool1}x{t.pool2}")
        if len(self.spectral.channels) != 2:
            raise ConfigError("the spectral stream has exactly two stages")
        if self.n_freqs < self.spectral.kernel or self.n_frames < 1:
            raise ConfigError(f"spectrogram {self.n_freqs}x{self.n_frames} smaller than kernel {self.spectral.kernel}")
        return self


def _as_input(x, cfg: ModelConfig) -> Tensor:
    dt = DTYPES[cfg.dtype]
    if isinstance(x, Tensor) and x.dtype == dt:
        return x
    return Tensor(np.asarray(x.data if isinstance(x, Tensor) else x, dtype=dt))


class TemporalStream(Module):
    """EEGNet-style stream: temporal conv, depthwise spatial conv, separable conv."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        t = cfg.temporal
        dt = DTYPES[cfg.dtype]
        f2 = t.f1 * t.depth
        self.temporal_conv = Conv2d(1, t.f1, (1, cfg.temporal_kernel), rng, padding="same", bias=False, dtype=dt)
        self.bn = BatchNorm(t.f1, dtype=dt)
        self.spatial_conv = DepthwiseConv2d(t.f1, t.depth, (cfg.n_channels, 1), rng, dtype=dt)
        self.pool1 = AvgPool2d((1, t.pool1))
        self.drop1 = Dropout(cfg.dropout_cnn, rng)
        self.separable = SeparableConv2d(f2, f2, (1, t.separable_kernel), rng, padding="same", dtype=dt)
        self.pool2 = AvgPool2d((1, t.pool2))
        self.drop2 = Dropout(cfg.dropout_cnn, rng)
        n_flat = f2 * (cfg.n_samples // t.pool1 // t.pool2)
        self.project = Linear(n_flat, cfg.d, rng, dtype=dt)

    def forward(self, x: Tensor) -> Tensor:
        B, C, T = x.shape
        h = self.bn(self.temporal_conv(x.reshape(B, 1, C, T)))
        h = self.drop1(self.pool1(ops.elu(self.spatial_conv(h))))
        h = self.drop2(self.pool2(ops.elu(self.separable(h))))
        return self.project(h.reshape(B, -1))


class SpectralStage(Module):
    """conv -> BN -> ELU -> SE -> residual add -> avg-pool -> dropout."""

    def __init__(self, c_in: int, c_out: int, cfg: SpectralStreamConfig, dropout: float, rng, dtype):
        self.conv = Conv2d(c_in, c_out, cfg.kernel, rng, padding="same", bias=False, dtype=dtype)
        self.bn = BatchNorm(c_out, dtype=dtype)
        self.se = SEBlock(c_out, cfg.se_reduction, rng, dtype=dtype)
        if c_in != c_out:
            self.shortcut = Conv2d(c_in, c_out, 1, rng, bias=False, dtype=dtype)
            self.shortcut_bn = BatchNorm(c_out, dtype=dtype)
        else:
            self.shortcut = None
            self.shortcut_bn = None
        self.pool = AvgPool2d(cfg.pool)
        self.drop = Dropout(dropout, rng)
        self.pre_pool: Optional[Tensor] = None

    def forward(self, x: Tensor) -> Tensor:
        h = self.se(ops.elu(self.bn(self.conv(x))))
        skip = x if self.shortcut is None else self.shortcut_bn(self.shortcut(x))
        h = h + skip
        self.pre_pool = h
        return self.drop(self.pool(h))


class SpectralStream(Module):
    """Shared 2-D encoder applied to every EEG channel's spectrogram, then
    projected to d and averaged over channels."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        s = cfg.spectral
        dt = DTYPES[cfg.dtype]
        c1, c2 = s.channels
        self.stage1 = SpectralStage(1, c1, s, cfg.dropout_cnn, rng, dt)
        self.stage2 = SpectralStage(c1, c2, s, cfg.dropout_cnn, rng, dt)
        h, w = self.stage1.pool.out_shape(cfg.n_freqs, cfg.n_frames)
        h, w = self.stage2.pool.out_shape(h, w)
        self.project = Linear(c2 * h * w, cfg.d, rng, dtype=dt)
        self.d = cfg.d

    def forward_per_channel(self, x: Tensor) -> Tensor:
        """(B, C, F, T') -> per-channel features (B, C, d)."""
        B, C, F, Tp = x.shape
        h = self.stage2(self.stage1(x.reshape(B * C, 1, F, Tp)))
        return self.project(h.reshape(B * C, -1)).reshape(B, C, self.d)

    def forward(self, x: Tensor) -> Tensor:
        return self.forward_per_channel(x).mean(axis=1)

    @property
    def cam_activation(self) -> Optional[Tensor]:
        return self.stage2.pre_pool


class AspenModel(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        cfg.validate()
        self.config = cfg
        rng = np.random.default_rng(seed)
        self.temporal = TemporalStream(cfg, rng)
        self.spectral = SpectralStream(cfg, rng)
        self.fusion: Fusion = build_fusion(
            cfg.fusion,
            cfg.d,
            rng,
            dropout=cfg.dropout_cnn,
            tau=cfg.tau,
            rank=cfg.bilinear_rank,
            heads=cfg.heads,
            dtype=DTYPES[cfg.dtype],
        )
        self.drop = Dropout(cfg.dropout_global, rng)
        self.classifier = Linear(cfg.d, cfg.n_outputs, rng, dtype=DTYPES[cfg.dtype])
        self.set_rng(np.random.default_rng(seed + 1))
        self.last_features: dict[str, Tensor] = {}

    @property
    def uses_time(self) -> bool:
        return True

    def streams(self, x_time, x_spec) -> tuple[Tensor, Tensor, Tensor]:
        """(x_s, x_t, per-channel spectral features)."""
        per_channel = self.spectral.forward_per_channel(_as_input(x_spec, self.config))
        x_s = per_channel.mean(axis=1)
        x_t = self.temporal(_as_input(x_time, self.config))
        return x_s, x_t, per_channel

    def forward(self, x_time, x_spec) -> Tensor:
        x_s, x_t, per_channel = self.streams(x_time, x_spec)
        fused = self.fusion(x_s, x_t, per_channel if self.fusion.needs_per_channel else None)
        self.last_features = {"x_s": x_s, "x_t": x_t, "fused": fused}
        return self.classifier(self.drop(fused))


class SpenModel(Module):
    """Spectral stream alone: x_s -> batch-norm -> dropout -> linear."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        cfg.validate()
        self.config = cfg
        rng = np.random.default_rng(seed)
        dt = DTYPES[cfg.dtype]
        self.spectral = SpectralStream(cfg, rng)
        self.norm = BatchNorm(cfg.d, dtype=dt)
        self.drop = Dropout(cfg.dropout_global, rng)
        self.classifier = Linear(cfg.d, cfg.n_outputs, rng, dtype=dt)
        self.set_rng(np.random.default_rng(seed + 1))
        self.last_features: dict[str, Tensor] = {}

    @property
    def uses_time(self) -> bool:
        return False

    def forward(self, x_time, x_spec) -> Tensor:
        x_s = self.spectral(_as_input(x_spec, self.config))
        self.last_features = {"x_s": x_s}
        return self.classifier(self.drop(self.norm(x_s)))


def build_model(cfg: ModelConfig, seed: int = 0, kind: str = "aspen") -> Module:
    if kind == "aspen":
        return AspenModel(cfg, seed)
    if kind == "spen":
        return SpenModel(cfg, seed)
    raise ConfigError(f"unknown model kind {kind!r} (aspen | spen)")


LossFn = Callable[[Tensor, np.ndarray], Tensor]


def positive_weight(labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    if n_pos == 0:
        raise ConfigError("training split has no positive examples; cannot set pos_weight")
    return float((labels == 0).sum()) / n_pos


def select_loss(n_classes: int, train_labels: Optional[np.ndarray] = None) -> tuple[LossFn, dict]:
    """Loss for a task: BCE-with-logits (pos_weight = #neg/#pos) for binary,
    cross-entropy otherwise. Returns the callable and a description."""
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    if n_classes == 2:
        pw = 1.0 if train_labels is None else positive_weight(train_labels)

        def bce(logits: Tensor, labels: np.ndarray) -> Tensor:
            return ops.bce_with_logits(logits, labels, pw)

        return bce, {"loss": "bce_with_logits", "pos_weight": pw}

    def ce(logits: Tensor, labels: np.ndarray) -> Tensor:
        return ops.cross_entropy(logits, labels)

    return ce, {"loss": "cross_entropy"}
