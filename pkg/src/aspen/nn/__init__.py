from .layers import (
    AvgPool2d,
    BatchNorm,
    Conv2d,
    DepthwiseConv2d,
    Dropout,
    ELU,
    Linear,
    Module,
    SEBlock,
    SeparableConv2d,
)
from .optim import Adam, EarlyStopping, ReduceLROnPlateau, clip_global_norm, global_grad_norm
from .tensor import Parameter, Tensor, as_tensor, no_grad
from . import tensor as ops

__all__ = [
    "Adam",
    "AvgPool2d",
    "BatchNorm",
    "Conv2d",
    "DepthwiseConv2d",
    "Dropout",
    "ELU",
    "EarlyStopping",
    "Linear",
    "Module",
    "Parameter",
    "ReduceLROnPlateau",
    "SEBlock",
    "SeparableConv2d",
    "Tensor",
    "as_tensor",
    "clip_global_norm",
    "global_grad_norm",
    "no_grad",
    "ops",
]
