"""Finite-difference gradient cases shared by the unit and acceptance suites.

Every case takes a seed, builds a small float64 problem, and returns the
worst relative error between backprop and central differences over the
inputs and all parameters.
"""

import numpy as np

from aspen.fusion import STRATEGIES, build_fusion
from aspen.nn import ops
from aspen.nn.gradcheck import check_gradients
from aspen.nn.layers import BatchNorm, Conv2d, DepthwiseConv2d, Linear, SEBlock, SeparableConv2d
from aspen.nn.tensor import Tensor

F64 = np.float64


def _leaf(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _module_case(module, inputs, rng, reseed=None):
    def loss():
        if reseed is not None:
            module.set_rng(np.random.default_rng(reseed))
        return (module(*inputs) * weights).sum()

    weights = Tensor(rng.normal(size=module(*inputs).shape))
    tensors = [t for t in inputs if isinstance(t, Tensor)] + module.parameters()
    for p in module.parameters():
        p.requires_grad = True
    return check_gradients(loss, tensors)


def conv(seed):
    rng = np.random.default_rng(seed)
    m = Conv2d(2, 3, (2, 3), rng, padding="same", dtype=F64)
    m.bias.data = rng.normal(size=3)
    return _module_case(m, [_leaf(rng, 2, 2, 4, 5)], rng)


def depthwise(seed):
    rng = np.random.default_rng(seed)
    return _module_case(DepthwiseConv2d(2, 2, (3, 1), rng, dtype=F64), [_leaf(rng, 2, 2, 3, 4)], rng)


def separable(seed):
    rng = np.random.default_rng(seed)
    return _module_case(SeparableConv2d(2, 3, (1, 3), rng, dtype=F64), [_leaf(rng, 2, 2, 2, 5)], rng)


def se_block(seed):
    rng = np.random.default_rng(seed)
    m = SEBlock(4, 2, rng, dtype=F64)
    m.fc1.bias.data = rng.normal(size=m.fc1.bias.shape)
    return _module_case(m, [_leaf(rng, 2, 4, 3, 3)], rng)


def batch_norm(seed):
    rng = np.random.default_rng(seed)
    m = BatchNorm(3, dtype=F64)
    m.gamma.data = rng.normal(size=3)
    m.beta.data = rng.normal(size=3)
    return _module_case(m, [_leaf(rng, 4, 3, 2, 2)], rng)


def batch_norm_eval(seed):
    rng = np.random.default_rng(seed)
    m = BatchNorm(3, dtype=F64)
    m.running_mean[:] = rng.normal(size=3)
    m.running_var[:] = rng.uniform(0.5, 2, size=3)
    m.eval()
    return _module_case(m, [_leaf(rng, 4, 3)], rng)


def linear(seed):
    rng = np.random.default_rng(seed)
    m = Linear(5, 3, rng, dtype=F64)
    m.bias.data = rng.normal(size=3)
    return _module_case(m, [_leaf(rng, 4, 5)], rng)


def avg_pool(seed):
    rng = np.random.default_rng(seed)
    x = _leaf(rng, 2, 2, 4, 6)
    w = Tensor(rng.normal(size=(2, 2, 2, 2)))
    return check_gradients(lambda: (ops.avg_pool2d(x, (2, 3)) * w).sum(), [x])


def _activation(fn):
    def case(seed):
        rng = np.random.default_rng(seed)
        x = _leaf(rng, 3, 7)
        # keep inputs off the kink of piecewise activations
        x.data = np.where(np.abs(x.data) < 1e-3, 0.1, x.data)
        w = Tensor(rng.normal(size=(3, 7)))
        return check_gradients(lambda: (fn(x) * w).sum(), [x])

    return case


def cross_entropy(seed):
    rng = np.random.default_rng(seed)
    z = _leaf(rng, 6, 4)
    y = rng.integers(0, 4, size=6)
    return check_gradients(lambda: ops.cross_entropy(z, y), [z])


def bce(seed):
    rng = np.random.default_rng(seed)
    z = _leaf(rng, 6, 1)
    y = rng.integers(0, 2, size=6)
    pw = float(rng.uniform(0.5, 5))
    return check_gradients(lambda: ops.bce_with_logits(z, y, pw), [z])


LAYER_CASES = {
    "conv": conv,
    "depthwise": depthwise,
    "separable": separable,
    "se": se_block,
    "batch_norm": batch_norm,
    "batch_norm_eval": batch_norm_eval,
    "linear": linear,
    "avg_pool": avg_pool,
    "relu": _activation(ops.relu),
    "elu": _activation(ops.elu),
    "sigmoid": _activation(ops.sigmoid),
    "softmax": _activation(lambda x: ops.softmax(x, axis=-1, temperature=0.7)),
    "cross_entropy": cross_entropy,
    "bce_with_logits": bce,
}


def fusion_case(name):
    def case(seed):
        rng = np.random.default_rng(seed)
        d, B, C = 8, 4, 3
        m = build_fusion(name, d, rng, rank=4, heads=2, tau=0.8, dtype=F64)
        # move off the zero initial state so every term contributes
        for p in m.parameters():
            p.data = p.data + 0.3 * rng.normal(size=p.shape)
        x_s, x_t = _leaf(rng, B, d), _leaf(rng, B, d)
        per_channel = _leaf(rng, B, C, d)
        inputs = [x_s, x_t, per_channel] if m.needs_per_channel else [x_s, x_t]
        return _module_case(m, inputs, rng, reseed=seed)

    return case


FUSION_CASES = {name: fusion_case(name) for name in STRATEGIES}
