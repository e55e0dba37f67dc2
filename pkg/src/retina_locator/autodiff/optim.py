"""
Retina Locator - Optimizers
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import logging
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from ..exceptions import ContractError
from .tensor import Tensor

logger = logging.getLogger(__name__)


class ParamStore:
    """Named trainable tensors plus their optimizer state."""

    def __init__(self, params: Optional[Iterable[Tuple[str, Tensor]]] = None):
        self.params: Dict[str, Tensor] = dict(params or [])
        self.velocity: Dict[str, np.ndarray] = {}
        self.first_moment: Dict[str, np.ndarray] = {}
        self.second_moment: Dict[str, np.ndarray] = {}
        self.step_count = 0

    @classmethod
    def from_module(cls, module, prefix: str = '') -> 'ParamStore':
        return cls(module.named_parameters(prefix))

    def add(self, params: Iterable[Tuple[str, Tensor]]):
        self.params.update(params)

    def __len__(self) -> int:
        return len(self.params)

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def scale_grads(self, factor: float):
        for p in self.params.values():
            if p.grad is not None:
                p.grad = p.grad * factor

    def ensure_grads(self):
        """Give parameters that took no part in the loss a zero gradient."""
        for p in self.params.values():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)

    def _grad(self, name: str, param: Tensor) -> np.ndarray:
        if param.grad is None:
            raise ContractError(f"Parameter '{name}' has no gradient; run backward() first")
        return param.grad


def sgd_step(store: ParamStore, lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
    """One SGD step with momentum and L2 weight decay.

    v <- momentum * v + (grad + weight_decay * w);  w <- w - lr * v
    """
    grads = {name: store._grad(name, p) for name, p in store.params.items()}
    for name, param in store.params.items():
        g = grads[name] + weight_decay * param.data
        v = store.velocity.get(name)
        v = g if v is None else momentum * v + g
        store.velocity[name] = v
        param.data = (param.data - lr * v).astype(param.dtype, copy=False)
    store.step_count += 1


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam step."""
    grads = {name: store._grad(name, p) for name, p in store.params.items()}
    store.step_count += 1
    t = store.step_count
    for name, param in store.params.items():
        g = grads[name]
        m = beta1 * store.first_moment.get(name, np.zeros_like(param.data)) + (1 - beta1) * g
        v = beta2 * store.second_moment.get(name, np.zeros_like(param.data)) + (1 - beta2) * g * g
        store.first_moment[name] = m
        store.second_moment[name] = v
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        param.data = (param.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype, copy=False)
