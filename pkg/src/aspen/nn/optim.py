"""Adam, global-norm clipping, plateau scheduler and early stopping."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .tensor import Parameter


def global_grad_norm(params: Sequence[Parameter]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(np.square(p.grad, dtype=np.float64)))
    return math.sqrt(total)


def clip_global_norm(params: Sequence[Parameter], max_norm: float = 1.0) -> float:
    """Rescale all gradients jointly so their global L2 norm is at most ``max_norm``.

    Returns the applied scale factor (1.0 when no clipping happened).
    """
    norm = global_grad_norm(params)
    if norm <= max_norm or norm == 0.0:
        return 1.0
    scale = max_norm / norm
    _scale_grads(params, scale)
    # float32 rounding can leave the norm a few ulps above the bound
    while (norm := global_grad_norm(params)) > max_norm:
        nudge = (max_norm / norm) * (1.0 - 2.0**-22)
        _scale_grads(params, nudge)
        scale *= nudge
    return scale


def _scale_grads(params: Sequence[Parameter], scale: float) -> None:
    for p in params:
        if p.grad is not None:
            p.grad = p.grad * np.asarray(scale, dtype=p.grad.dtype)


class Adam:
    """Adam with bias correction and classic (gradient-coupled) L2 weight decay."""

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 3e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data, dtype=np.float64) for p in self.params]
        self.v = [np.zeros_like(p.data, dtype=np.float64) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad.astype(np.float64)
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data = (p.data - update).astype(p.dtype, copy=False)

    def state_dict(self) -> dict:
        return {"step": self.step_count, "lr": self.lr, "m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v]}


class ReduceLROnPlateau:
    """Multiply the learning rate by ``factor`` once the monitored loss has
    failed to improve by more than ``threshold`` for more than ``patience``
    consecutive epochs."""

    def __init__(self, optimizer: Adam, factor: float = 0.5, patience: int = 5, threshold: float = 1e-6):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.best = math.inf
        self.num_bad_epochs = 0

    def step(self, metric: float) -> bool:
        if metric < self.best - self.threshold:
            self.best = metric
            self.num_bad_epochs = 0
            return False
        self.num_bad_epochs += 1
        if self.num_bad_epochs > self.patience:
            self.optimizer.lr *= self.factor
            self.num_bad_epochs = 0
            return True
        return False


class EarlyStopping:
    """Signals a stop after ``patience`` epochs without an improvement of the
    monitored score (higher is better)."""

    def __init__(self, patience: int = 15, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.best = -math.inf
        self.bad_epochs = 0

    def step(self, score: float) -> bool:
        if score > self.best + self.min_delta:
            self.best = score
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience
