"""Layer modules built on the autodiff ops.

``Module`` discovers parameters, buffers and submodules from instance
attributes in definition order, which fixes the parameter order used by the
optimizer and the checkpoint format.
"""

from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np

from ..errors import ParameterError
from . import tensor as T
from .tensor import Parameter, Tensor


class Module:
    training: bool = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    # -- traversal
    def named_children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.named_children():
            yield from child.modules()

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self.named_children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name in getattr(self, "_buffers", ()):
            yield prefix + name, getattr(self, name)
        for name, child in self.named_children():
            yield from child.named_buffers(prefix + name + ".")

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    # -- mode
    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    # -- state
    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise ParameterError(f"state dict is missing entries: {sorted(missing)}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ParameterError(f"shape mismatch for {name}: {state[name].shape} vs {p.shape}")
            p.data = state[name].astype(p.dtype, copy=True)
        for name, buf in buffers.items():
            buf[...] = state[name]

    def set_rng(self, rng: np.random.Generator) -> None:
        """Give every dropout layer the same generator."""
        for m in self.modules():
            if isinstance(m, Dropout):
                m.rng = rng


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True, dtype=np.float32):
        self.weight = Parameter(kaiming_uniform(rng, (n_out, n_in), n_in, dtype))
        self.bias = Parameter(np.zeros(n_out, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(
        self,
        c_in: int,
        c_out: int,
        kernel,
        rng: np.random.Generator,
        stride=1,
        padding="valid",
        groups: int = 1,
        bias: bool = True,
        dtype=np.float32,
    ):
        kh, kw = (kernel, kernel) if np.isscalar(kernel) else tuple(kernel)
        if c_in % groups or c_out % groups:
            raise ParameterError(f"channels ({c_in}, {c_out}) not divisible by groups={groups}")
        fan_in = (c_in // groups) * kh * kw
        self.weight = Parameter(kaiming_uniform(rng, (c_out, c_in // groups, kh, kw), fan_in, dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype)) if bias else None
        self.stride = stride
        self.groups = groups
        if padding == "same":
            # odd totals put the extra sample at the bottom/right
            ph, pw = kh - 1, kw - 1
            self.padding = (ph // 2, ph - ph // 2, pw // 2, pw - pw // 2)
        elif padding == "valid":
            self.padding = (0, 0, 0, 0)
        else:
            self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding, groups=self.groups)


class DepthwiseConv2d(Conv2d):
    """Each input channel gets its own ``depth`` kernels; no cross-channel mixing."""

    def __init__(self, c_in: int, depth: int, kernel, rng, padding="valid", bias: bool = False, dtype=np.float32):
        super().__init__(c_in, c_in * depth, kernel, rng, padding=padding, groups=c_in, bias=bias, dtype=dtype)


class SeparableConv2d(Module):
    """Depthwise conv followed by a 1x1 pointwise conv."""

    def __init__(self, c_in: int, c_out: int, kernel, rng, padding="same", bias: bool = False, dtype=np.float32):
        self.depthwise = DepthwiseConv2d(c_in, 1, kernel, rng, padding=padding, dtype=dtype)
        self.pointwise = Conv2d(c_in, c_out, 1, rng, bias=bias, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.pointwise(self.depthwise(x))


class BatchNorm(Module):
    """Batch-norm over axis 1 for (B, F) or (B, C, H, W) inputs."""

    _buffers = ("running_mean", "running_var")

    def __init__(self, n_features: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        self.gamma = Parameter(np.ones(n_features, dtype=dtype))
        self.beta = Parameter(np.zeros(n_features, dtype=dtype))
        self.running_mean = np.zeros(n_features, dtype=np.float64)
        self.running_var = np.ones(n_features, dtype=np.float64)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var, self.training, self.momentum, self.eps
        )


class Dropout(Module):
    def __init__(self, p: float, rng: Optional[np.random.Generator] = None):
        self.p = p
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x: Tensor) -> Tensor:
        return T.dropout(x, self.p, self.rng, self.training)


class AvgPool2d(Module):
    """Average pooling whose window shrinks to fit inputs smaller than it."""

    def __init__(self, kernel):
        self.kernel = (kernel, kernel) if np.isscalar(kernel) else tuple(kernel)

    def out_shape(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = min(self.kernel[0], h), min(self.kernel[1], w)
        return h // kh, w // kw

    def forward(self, x: Tensor) -> Tensor:
        kh, kw = min(self.kernel[0], x.shape[2]), min(self.kernel[1], x.shape[3])
        if (kh, kw) == (1, 1):
            return x
        return T.avg_pool2d(x, (kh, kw))


class ELU(Module):
    def forward(self, x: Tensor) -> Tensor:
        return T.elu(x)


class SEBlock(Module):
    """Squeeze-and-excitation channel gating: x * sigmoid(W2 relu(W1 gap(x)))."""

    def __init__(self, channels: int, reduction: int, rng, dtype=np.float32):
        hidden = max(1, channels // reduction)
        self.fc1 = Linear(channels, hidden, rng, dtype=dtype)
        self.fc2 = Linear(hidden, channels, rng, dtype=dtype)
        self.last_gate: Optional[np.ndarray] = None

    def forward(self, x: Tensor) -> Tensor:
        squeezed = x.mean(axis=(2, 3))
        gate = T.sigmoid(self.fc2(T.relu(self.fc1(squeezed))))
        self.last_gate = gate.data
        return x * gate.reshape(x.shape[0], x.shape[1], 1, 1)
