"""
Retina Locator - Network building blocks
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import logging
from abc import ABC, abstractmethod
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from ..exceptions import DataError, DimensionError
from . import tensor as T
from .tensor import RunningStats, Tensor

logger = logging.getLogger(__name__)


def he_normal(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / max(fan_in, 1)), size=shape)


def xavier_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / max(fan_in + fan_out, 1))
    return rng.uniform(-limit, limit, size=shape)


class Module(ABC):
    """Base class for everything that owns parameters.

    Parameters and buffers are registered by name; children contribute their
    entries under a dotted prefix, which is also the checkpoint entry name.
    """

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self._buffers: Dict[str, Tensor] = {}
        self._children: Dict[str, 'Module'] = {}
        self.training = True

    def add_param(self, name: str, data: np.ndarray) -> Tensor:
        param = Tensor(data, requires_grad=True)
        self._params[name] = param
        return param

    def add_buffer(self, name: str, tensor: Tensor) -> Tensor:
        self._buffers[name] = tensor
        return tensor

    def add_child(self, name: str, module: 'Module') -> 'Module':
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = '') -> Iterator[Tuple[str, Tensor]]:
        for name, param in self._params.items():
            yield prefix + name, param
        for child_name, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{child_name}.")

    def named_buffers(self, prefix: str = '') -> Iterator[Tuple[str, Tensor]]:
        for name, buf in self._buffers.items():
            yield prefix + name, buf
        for child_name, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{child_name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self, prefix: str = '') -> Dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters(prefix)}
        state.update({name: b.data for name, b in self.named_buffers(prefix)})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], prefix: str = ''):
        """Copy arrays into parameters and buffers in place.

        Raises:
            DataError: an expected entry is missing
            DimensionError: an entry has the wrong shape
        """
        entries = list(self.named_parameters(prefix)) + list(self.named_buffers(prefix))
        for name, target in entries:
            if name not in state:
                raise DataError(f"Checkpoint has no entry '{name}'")
            value = np.asarray(state[name])
            if value.shape != target.shape:
                raise DimensionError(f"Checkpoint entry '{name}' has shape {value.shape}, expected {target.shape}")
            target.data = value.astype(target.dtype)

    def train(self, mode: bool = True) -> 'Module':
        self.training = mode
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self) -> 'Module':
        return self.train(False)

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.zero_grad()

    @abstractmethod
    def forward(self, *args, **kwargs):
        pass

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    """y = x W (+ b) on (n, in_features) rows."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = self.add_param('weight', xavier_uniform(rng, (in_features, out_features),
                                                              in_features, out_features))
        self.bias = self.add_param('bias', np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise DimensionError(f"Linear({self.in_features}->{self.out_features}) got input {x.shape}")
        out = T.matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 stride: int = 1, pad: int = 0, bias: bool = True):
        super().__init__()
        fan_in = in_channels * kernel_size * kernel_size
        self.stride = stride
        self.pad = pad
        self.weight = self.add_param('weight', he_normal(rng, (out_channels, in_channels, kernel_size, kernel_size),
                                                         fan_in))
        self.bias = self.add_param('bias', np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class BatchNorm(Module):
    """Batch normalization over features (2-D) or channels (4-D)."""

    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.add_param('gamma', np.ones(num_features))
        self.beta = self.add_param('beta', np.zeros(num_features))
        self.running = RunningStats(num_features, momentum)
        self.add_buffer('running_mean', self.running.mean)
        self.add_buffer('running_var', self.running.var)

    def forward(self, x: Tensor) -> Tensor:
        mode = 'train' if self.training else 'eval'
        return T.batch_norm(x, self.gamma, self.beta, self.running, mode=mode, eps=self.eps)


class Normalizer(Module):
    """Fixed per-channel input standardization stored alongside the weights."""

    def __init__(self, channels: int = 3, mean: Optional[np.ndarray] = None, std: Optional[np.ndarray] = None):
        super().__init__()
        self.input_mean = self.add_buffer('input_mean', Tensor(np.zeros(channels) if mean is None else mean))
        self.input_std = self.add_buffer('input_std', Tensor(np.ones(channels) if std is None else std))

    def set(self, mean: np.ndarray, std: np.ndarray):
        self.input_mean.data = np.asarray(mean, dtype=self.input_mean.dtype).reshape(self.input_mean.shape)
        self.input_std.data = np.asarray(std, dtype=self.input_std.dtype).reshape(self.input_std.shape)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Standardize (c, h, w) or (n, c, h, w) pixel arrays."""
        shape = (-1, 1, 1) if x.ndim == 3 else (1, -1, 1, 1)
        return (x - self.input_mean.data.reshape(shape)) / self.input_std.data.reshape(shape)
