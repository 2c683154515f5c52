"""Spectral/temporal fusion strategies.

Every strategy maps ``(x_s, x_t)`` of shape (B, d) to a (B, d) fused
representation and owns the batch-norm that closes it. Spatial attention
additionally needs the per-channel spectral features (B, C, d) captured
before the channel mean.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .errors import ConfigError, ParameterError
from .nn import ops
from .nn.layers import BatchNorm, Dropout, Linear, Module
from .nn.tensor import Parameter, Tensor

STRATEGIES = ("static", "global_attn", "spatial_attn", "glu", "multiplicative", "bilinear", "cross_attn")


def _check_dims(x_s: Tensor, x_t: Tensor, d: int) -> None:
    if x_s.shape != x_t.shape or x_s.shape[-1] != d:
        raise ParameterError(f"fusion expects two (B, {d}) inputs, got {x_s.shape} and {x_t.shape}")


class AttentionMLP(Module):
    """2d -> d (ReLU) -> 2 scoring network."""

    def __init__(self, d: int, rng, dtype):
        self.fc1 = Linear(2 * d, d, rng, dtype=dtype)
        self.fc2 = Linear(d, 2, rng, dtype=dtype)

    def forward(self, c: Tensor) -> Tensor:
        return self.fc2(ops.relu(self.fc1(c)))


class Fusion(Module):
    name: str = ""
    needs_per_channel = False
    has_projections = False

    def __init__(self, d: int, dtype=np.float32):
        self.d = d
        self.norm = BatchNorm(d, dtype=dtype)
        # attention / gate weights from the last forward pass, for inspection
        self.last_weights: Optional[np.ndarray] = None

    def fuse(self, x_s: Tensor, x_t: Tensor, per_channel: Optional[Tensor] = None) -> Tensor:
        """Pre-normalization fused representation."""
        raise NotImplementedError

    def forward(self, x_s: Tensor, x_t: Tensor, per_channel: Optional[Tensor] = None) -> Tensor:
        _check_dims(x_s, x_t, self.d)
        return self.norm(self.fuse(x_s, x_t, per_channel))

    def projections(self, x_s: Tensor, x_t: Tensor) -> tuple[Tensor, Tensor]:
        raise NotImplementedError(f"{self.name} fusion has no explicit stream projections")


class StaticFusion(Fusion):
    name = "static"

    def fuse(self, x_s, x_t, per_channel=None):
        return (x_s + x_t) * 0.5


class _ResidualGate(Fusion):
    def __init__(self, d, rng, tau: float, dtype):
        super().__init__(d, dtype)
        if tau <= 0:
            raise ConfigError(f"temperature must be > 0, got {tau}")
        self.tau = tau
        self.alpha = Parameter(np.zeros(1, dtype=dtype))

    def residual(self, x_s: Tensor, x_t: Tensor) -> Tensor:
        return ops.sigmoid(self.alpha) * ((x_s + x_t) * 0.5)


class GlobalAttentionFusion(_ResidualGate):
    name = "global_attn"

    def __init__(self, d, rng, tau: float = 1.0, dtype=np.float32):
        super().__init__(d, rng, tau, dtype)
        self.mlp = AttentionMLP(d, rng, dtype)

    def fuse(self, x_s, x_t, per_channel=None):
        a = ops.softmax(self.mlp(ops.concat([x_s, x_t], axis=-1)), axis=-1, temperature=self.tau)
        self.last_weights = a.data
        f = a[:, 0:1] * x_s + a[:, 1:2] * x_t
        return f + self.residual(x_s, x_t)


class SpatialAttentionFusion(Fusion):
    name = "spatial_attn"
    needs_per_channel = True

    def __init__(self, d, rng, tau: float = 1.0, dtype=np.float32):
        super().__init__(d, dtype)
        if tau <= 0:
            raise ConfigError(f"temperature must be > 0, got {tau}")
        self.tau = tau
        self.mlp = AttentionMLP(d, rng, dtype)

    def fuse(self, x_s, x_t, per_channel=None):
        if per_channel is None:
            raise ParameterError("spatial attention needs per-channel spectral features (B, C, d)")
        B, C, d = per_channel.shape
        x_t_b = x_t.reshape(B, 1, d) + Tensor(np.zeros((1, C, 1), dtype=x_t.dtype))
        a = ops.softmax(self.mlp(ops.concat([per_channel, x_t_b], axis=-1)), axis=-1, temperature=self.tau)
        self.last_weights = a.data
        f = a[:, :, 0:1] * per_channel + a[:, :, 1:2] * x_t_b
        return f.mean(axis=1)

    def forward(self, x_s, x_t, per_channel=None):
        if per_channel is None:
            raise ParameterError("spatial attention needs per-channel spectral features (B, C, d)")
        if per_channel.shape[-1] != self.d or x_t.shape[-1] != self.d:
            raise ParameterError("feature dimension mismatch in spatial attention")
        return self.norm(self.fuse(x_s, x_t, per_channel))


class GLUFusion(Fusion):
    name = "glu"

    def __init__(self, d, rng, dtype=np.float32):
        super().__init__(d, dtype)
        self.gate = Linear(2 * d, d, rng, dtype=dtype)

    def fuse(self, x_s, x_t, per_channel=None):
        g = ops.sigmoid(self.gate(ops.concat([x_s, x_t], axis=-1)))
        self.last_weights = g.data
        return (x_s + x_t) * g


class MultiplicativeFusion(Fusion):
    """(W_s x_s + b_s) * (W_t x_t + b_t): a coordinate survives only when both
    projected streams are non-zero there."""

    name = "multiplicative"
    has_projections = True

    def __init__(self, d, rng, dropout: float = 0.25, dtype=np.float32):
        super().__init__(d, dtype)
        self.proj_s = Linear(d, d, rng, dtype=dtype)
        self.proj_t = Linear(d, d, rng, dtype=dtype)
        self.dropout = Dropout(dropout, rng)

    def projections(self, x_s, x_t):
        return self.proj_s(x_s), self.proj_t(x_t)

    def fuse(self, x_s, x_t, per_channel=None):
        p_s, p_t = self.projections(x_s, x_t)
        return self.dropout(p_s * p_t)


class BilinearFusion(Fusion):
    """Low-rank bilinear pooling through a rank-R Hadamard bottleneck."""

    name = "bilinear"
    has_projections = True

    def __init__(self, d, rng, rank: int = 16, dropout: float = 0.25, dtype=np.float32):
        super().__init__(d, dtype)
        if not 1 <= rank <= d:
            raise ConfigError(f"bilinear rank must be in [1, d={d}], got {rank}")
        self.rank = rank
        self.u_s = Linear(d, rank, rng, bias=False, dtype=dtype)
        self.u_t = Linear(d, rank, rng, bias=False, dtype=dtype)
        self.out = Linear(rank, d, rng, dtype=dtype)
        self.dropout = Dropout(dropout, rng)

    def projections(self, x_s, x_t):
        return self.u_s(x_s), self.u_t(x_t)

    def fuse(self, x_s, x_t, per_channel=None):
        z_s, z_t = self.projections(x_s, x_t)
        return self.dropout(self.out(z_s * z_t))


class CrossAttentionFusion(_ResidualGate):
    """Spectral queries attend over temporal keys/values, then a learned
    two-way weighting between x_s and the attended vector.

    Each trial contributes a single token, so the key axis has length one.
    """

    name = "cross_attn"

    def __init__(self, d, rng, heads: int = 4, tau: float = 1.0, dtype=np.float32):
        super().__init__(d, rng, tau, dtype)
        if heads < 1 or d % heads:
            raise ConfigError(f"number of heads ({heads}) must divide d ({d})")
        self.heads = heads
        self.w_q = Linear(d, d, rng, bias=False, dtype=dtype)
        self.w_k = Linear(d, d, rng, bias=False, dtype=dtype)
        self.w_v = Linear(d, d, rng, bias=False, dtype=dtype)
        self.w_o = Linear(d, d, rng, bias=False, dtype=dtype)
        self.mlp = AttentionMLP(d, rng, dtype)
        self.last_attention: Optional[np.ndarray] = None

    def attend(self, x_s: Tensor, x_t: Tensor) -> Tensor:
        B, d = x_s.shape
        h, dh = self.heads, d // self.heads
        q = self.w_q(x_s).reshape(B, h, 1, dh)
        k = self.w_k(x_t).reshape(B, h, 1, dh)
        v = self.w_v(x_t).reshape(B, h, 1, dh)
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / (self.tau * math.sqrt(dh)))
        attn = ops.softmax(scores, axis=-1)
        self.last_attention = attn.data
        heads = (attn @ v).reshape(B, d)
        return self.w_o(heads)

    def fuse(self, x_s, x_t, per_channel=None):
        x_attn = self.attend(x_s, x_t)
        w = ops.softmax(self.mlp(ops.concat([x_s, x_attn], axis=-1)), axis=-1, temperature=self.tau)
        self.last_weights = w.data
        f = w[:, 0:1] * x_s + w[:, 1:2] * x_attn
        return f + self.residual(x_s, x_t)


def build_fusion(
    name: str,
    d: int,
    rng: np.random.Generator,
    *,
    dropout: float = 0.25,
    tau: float = 1.0,
    rank: int = 16,
    heads: int = 4,
    dtype=np.float32,
) -> Fusion:
    if name == "static":
        return StaticFusion(d, dtype)
    if name == "global_attn":
        return GlobalAttentionFusion(d, rng, tau, dtype)
    if name == "spatial_attn":
        return SpatialAttentionFusion(d, rng, tau, dtype)
    if name == "glu":
        return GLUFusion(d, rng, dtype)
    if name == "multiplicative":
        return MultiplicativeFusion(d, rng, dropout, dtype)
    if name == "bilinear":
        return BilinearFusion(d, rng, rank, dropout, dtype)
    if name == "cross_attn":
        return CrossAttentionFusion(d, rng, heads, tau, dtype)
    raise ConfigError(f"unknown fusion strategy {name!r}; choose from {', '.join(STRATEGIES)}")
