"""
Retina Locator - Tensor autodiff
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

from .gradcheck import grad_check
from .nn import BatchNorm, Conv2d, Linear, Module, Normalizer
from .optim import ParamStore, adam_step, sgd_step
from .tensor import (
    RunningStats,
    Tape,
    Tensor,
    backward,
    batch_norm,
    concat,
    conv2d,
    default_dtype,
    matmul,
    no_tape,
    relu,
    softmax,
)

__all__ = [
    'Tensor', 'Tape', 'backward', 'matmul', 'conv2d', 'relu', 'softmax', 'batch_norm', 'concat',
    'RunningStats', 'default_dtype', 'no_tape', 'ParamStore', 'sgd_step', 'adam_step', 'grad_check',
    'Module', 'Linear', 'Conv2d', 'BatchNorm', 'Normalizer',
]
