"""
Retina Locator - Finite-difference gradient checking
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details
"""

import logging
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np

from ..exceptions import ContractError
from .tensor import Tape, Tensor, backward, no_tape

logger = logging.getLogger(__name__)


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(fn: Callable[[], Tensor], params: Union[Sequence[Tensor], Dict[str, Tensor]],
               eps: float = 1e-5, max_checks_per_param: Optional[int] = None, seed: int = 0) -> float:
    """Compare autodiff gradients of a scalar function with central differences.

    Args:
        fn: zero-argument callable that rebuilds the scalar loss from ``params``
        params: tensors to perturb (must be float64)
        eps: finite-difference step
        max_checks_per_param: sample this many entries per tensor instead of all
        seed: sampling seed

    Returns:
        Largest relative error over all checked entries
    """
    tensors = list(params.values()) if isinstance(params, dict) else list(params)
    for p in tensors:
        if p.dtype != np.float64:
            raise ContractError(f"grad_check needs float64 tensors, got {p.dtype}")
        p.requires_grad = True
        p.grad = None

    with Tape() as tape:
        loss = fn()
    backward(loss, tape)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in tensors]

    rng = np.random.default_rng(seed)
    worst = 0.0
    with no_tape():
        for p, grad in zip(tensors, analytic):
            p.data = np.ascontiguousarray(p.data)
            flat = p.data.reshape(-1)
            indices = np.arange(flat.size)
            if max_checks_per_param is not None and flat.size > max_checks_per_param:
                indices = rng.choice(flat.size, size=max_checks_per_param, replace=False)
            for idx in indices:
                original = flat[idx]
                flat[idx] = original + eps
                f_plus = fn().item()
                flat[idx] = original - eps
                f_minus = fn().item()
                flat[idx] = original
                numeric = (f_plus - f_minus) / (2 * eps)
                worst = max(worst, relative_error(float(grad.reshape(-1)[idx]), numeric))

    logger.debug(f"grad_check over {len(tensors)} tensors: max relative error {worst:.3e}")
    return worst
