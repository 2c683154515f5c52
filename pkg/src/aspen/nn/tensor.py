"""A small reverse-mode autodiff engine over numpy arrays.

Every differentiable op builds a node holding the forward value, its parent
nodes and a closure mapping the output gradient to one gradient per parent.
``Tensor.backward`` walks the graph in reverse topological order. Gradients
are kept on every node that requires them, so intermediate activations can
be inspected after a backward pass (Grad-CAM relies on this).
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import ParameterError

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __array_priority__ = 100

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward: Optional[BackwardFn] = None,
        name: str = "",
    ):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._backward = backward
        self.name = name

    # -- basic properties
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # -- autodiff
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if not self.requires_grad:
            raise ParameterError("backward() called on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ParameterError("grad must be given for non-scalar outputs")
            grad = np.ones_like(self.data)

        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        # intermediate grads from an earlier pass would double count
        for node in order:
            if node._backward is not None:
                node.grad = None
        self.grad = np.asarray(grad, dtype=self.data.dtype)

        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

    # -- operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


class Parameter(Tensor):
    """A leaf tensor that always requires grad."""

    def __init__(self, data, name: str = ""):
        super().__init__(np.asarray(data), requires_grad=True, name=name)

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape}, dtype={self.dtype})"


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    if dtype is None and arr.dtype.kind != "f":
        arr = arr.astype(np.float64)
    return Tensor(arr)


def _node(data: np.ndarray, parents: Iterable[Tensor], backward: BackwardFn) -> Tensor:
    parents = tuple(parents)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward=backward)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _operands(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return as_tensor(a), as_tensor(b)


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _operands(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _operands(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _operands(a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _operands(a, b)

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _node(a.data / b.data, (a, b), backward)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return _node(out, (x,), lambda g: (g * (x.data > 0),))


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    # exp(min(x, 0)) is 1 on the positive side, which doubles as the derivative there
    e = np.exp(np.minimum(x.data, 0))
    out = np.maximum(x.data, 0) + alpha * (e - 1)

    def backward(g):
        d = e if alpha == 1.0 else alpha * e + (1.0 - alpha) * (x.data > 0)
        return (g * d,)

    return _node(out, (x,), backward)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so neither branch overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return _node(s, (x,), lambda g: (g * s * (1.0 - s),))


def softmax(x: Tensor, axis: int = -1, temperature: float = 1.0) -> Tensor:
    if temperature <= 0:
        raise ParameterError(f"softmax temperature must be > 0, got {temperature}")
    z = x.data / temperature
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return ((p * (g - (g * p).sum(axis=axis, keepdims=True))) / temperature,)

    return _node(p, (x,), backward)


def exp(x: Tensor) -> Tensor:
    e = np.exp(x.data)
    return _node(e, (x,), lambda g: (g * e,))


# ---------------------------------------------------------------- reductions / shape


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)

    return _node(np.asarray(out), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = range(x.ndim) if axis is None else ((axis,) if np.isscalar(axis) else axis)
    n = int(np.prod([x.shape[a] for a in axes]))
    return sum_(x, axis, keepdims) * (1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else np.argsort(axes)
    return _node(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def getitem(x: Tensor, index) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        if _is_advanced(index):
            np.add.at(full, index, g)
        else:
            full[index] += g
        return (full,)

    return _node(np.asarray(x.data[index]), (x,), backward)


def _is_advanced(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def pad2d(x: Tensor, pad: tuple[int, int, int, int]) -> Tensor:
    """Zero-pad the last two axes by (top, bottom, left, right)."""
    top, bottom, left, right = pad
    if not any(pad):
        return x
    width = [(0, 0)] * (x.ndim - 2) + [(top, bottom), (left, right)]
    out = np.pad(x.data, width)
    h, w = x.shape[-2:]

    def backward(g):
        return (g[..., top : top + h, left : left + w],)

    return _node(out, (x,), backward)


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    a, b = _operands(a, b)

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(a.data @ b.data, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape (..., n) and ``weight`` (m, n)."""
    if x.shape[-1] != weight.shape[1]:
        raise ParameterError(f"linear: input dim {x.shape[-1]} does not match weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gx = g @ weight.data if x.requires_grad else None
        g2 = g.reshape(-1, g.shape[-1])
        gw = g2.T @ x.data.reshape(-1, x.shape[-1])
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _node(out, parents, backward)


# ---------------------------------------------------------------- convolution / pooling


def _windows(x: np.ndarray, kh: int, kw: int, stride: tuple[int, int]) -> np.ndarray:
    """(B, C, H, W) -> strided view (B, C, H', W', kh, kw)."""
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, :: stride[0], :: stride[1]]


def _pair(v) -> tuple[int, int]:
    return (v, v) if np.isscalar(v) else (int(v[0]), int(v[1]))


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride=1, padding=0, groups: int = 1) -> Tensor:
    """Grouped 2-D cross-correlation.

    ``x`` is (B, Cin, H, W), ``weight`` is (Cout, Cin/groups, kh, kw).
    ``padding`` is an int, an (h, w) pair or explicit (top, bottom, left, right).
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ParameterError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    if np.isscalar(padding):
        padding = (padding, padding, padding, padding)
    elif len(padding) == 2:
        padding = (padding[0], padding[0], padding[1], padding[1])
    x = pad2d(x, tuple(int(p) for p in padding))
    sh, sw = _pair(stride)
    if sh < 1 or sw < 1:
        raise ParameterError("stride must be >= 1")
    B, cin, H, W = x.shape
    cout, cin_g, kh, kw = weight.shape
    if cin % groups or cout % groups or cin // groups != cin_g:
        raise ParameterError(f"conv2d: {cin} input channels incompatible with weight {weight.shape} and groups={groups}")
    if kh > H or kw > W:
        raise ParameterError(f"conv2d: kernel {(kh, kw)} larger than padded input {(H, W)}")
    cout_g = cout // groups
    ho, wo = (H - kh) // sh + 1, (W - kw) // sw + 1

    # columns: (groups, B*ho*wo, cin_g*kh*kw)
    win = _windows(x.data, kh, kw, (sh, sw))  # B, cin, ho, wo, kh, kw
    cols = win.reshape(B, groups, cin_g, ho, wo, kh, kw).transpose(1, 0, 3, 4, 2, 5, 6)
    cols = cols.reshape(groups, B * ho * wo, cin_g * kh * kw)
    wmat = weight.data.reshape(groups, cout_g, cin_g * kh * kw)
    out = cols @ wmat.transpose(0, 2, 1)  # groups, B*ho*wo, cout_g
    out = out.reshape(groups, B, ho, wo, cout_g).transpose(1, 0, 4, 2, 3).reshape(B, cout, ho, wo)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)
    out = np.ascontiguousarray(out)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gg = g.reshape(B, groups, cout_g, ho, wo).transpose(1, 0, 3, 4, 2).reshape(groups, B * ho * wo, cout_g)
        gw = (gg.transpose(0, 2, 1) @ cols).reshape(weight.shape)
        gx = None
        if x.requires_grad:
            gcols = (gg @ wmat).reshape(groups, B, ho, wo, cin_g, kh, kw)
            gcols = gcols.transpose(1, 0, 4, 2, 3, 5, 6).reshape(B, cin, ho, wo, kh, kw)
            gx = np.zeros_like(x.data)
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += gcols[..., i, j]
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _node(out, parents, backward)


def avg_pool2d(x: Tensor, kernel, stride=None) -> Tensor:
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride if stride is not None else (kh, kw))
    B, C, H, W = x.shape
    if kh > H or kw > W:
        raise ParameterError(f"pool window {(kh, kw)} does not fit input {(H, W)}")
    ho, wo = (H - kh) // sh + 1, (W - kw) // sw + 1
    if (sh, sw) == (kh, kw):
        out = x.data[:, :, : ho * kh, : wo * kw].reshape(B, C, ho, kh, wo, kw).mean(axis=(3, 5))
    else:
        out = _windows(x.data, kh, kw, (sh, sw)).mean(axis=(-2, -1))
    scale = 1.0 / (kh * kw)

    def backward(g):
        gx = np.zeros_like(x.data)
        gs = g * scale
        for i in range(kh):
            for j in range(kw):
                gx[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += gs
        return (gx,)

    return _node(np.ascontiguousarray(out), (x,), backward)


# ---------------------------------------------------------------- normalization / regularization


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Batch-norm over every axis except 1 (features/channels).

    In training mode the running statistics are updated in place, using the
    unbiased batch variance as the running estimate.
    """
    B, C = x.shape[0], x.shape[1]
    x3 = x.data.reshape(B, C, -1)
    n = B * x3.shape[2]
    if training:
        if n < 2:
            raise ParameterError("batch-norm in training mode needs more than one value per feature")
        mu = np.einsum("bcs->c", x3) / n
        xc = x3 - mu[:, None]
        var = np.einsum("bcs,bcs->c", xc, xc) / n
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * n / (n - 1)
    else:
        mu, var = running_mean.astype(x.dtype), running_var
        xc = x3 - mu[:, None]
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xc *= inv_std[:, None]
    xhat = xc
    out = xhat * gamma.data[:, None]
    out += beta.data[:, None]

    def backward(g):
        g3 = g.reshape(B, C, -1)
        gbeta = np.einsum("bcs->c", g3)
        ggamma = np.einsum("bcs,bcs->c", g3, xhat)
        gx = None
        if x.requires_grad:
            scale = (gamma.data * inv_std)[:, None]
            if training:
                gx = scale * (g3 - (gbeta / n)[:, None] - xhat * (ggamma / n)[:, None])
            else:
                gx = g3 * scale
            gx = gx.reshape(x.shape)
        return gx, ggamma, gbeta

    return _node(out.reshape(x.shape).astype(x.dtype, copy=False), (x, gamma, beta), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity in eval mode or when ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return _node(x.data * mask, (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------- losses


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    B, K = logits.shape
    if labels.shape != (B,):
        raise ParameterError(f"labels shape {labels.shape} does not match batch {B}")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ParameterError(f"labels must lie in [0, {K})")
    logp = _log_softmax(logits.data)
    loss = -logp[np.arange(B), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(B), labels] -= 1.0
        return (g * p / B,)

    return _node(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def bce_with_logits(logits: Tensor, labels, pos_weight: float = 1.0) -> Tensor:
    """Mean of ``pos_weight*y*softplus(-z) + (1-y)*softplus(z)``."""
    if pos_weight <= 0:
        raise ParameterError(f"pos_weight must be > 0, got {pos_weight}")
    z = logits.data.reshape(-1)
    y = np.asarray(labels, dtype=logits.dtype).reshape(-1)
    if y.shape != z.shape:
        raise ParameterError(f"labels shape {y.shape} does not match logits {z.shape}")
    n = z.size
    loss = (pos_weight * y * _softplus(-z) + (1.0 - y) * _softplus(z)).mean()

    def backward(g):
        s = _sigmoid(z)
        # d/dz softplus(-z) = s - 1, d/dz softplus(z) = s
        dz = pos_weight * y * (s - 1.0) + (1.0 - y) * s
        return ((g * dz / n).reshape(logits.shape),)

    return _node(np.asarray(loss, dtype=logits.dtype), (logits,), backward)
