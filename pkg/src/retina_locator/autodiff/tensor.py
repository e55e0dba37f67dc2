"""
Retina Locator - Dense tensors with tape-based reverse-mode autodiff
Copyright (c) 2025 Retina Locator Team
Licensed under MIT License - see LICENSE file for details

Operations executed while a :class:`Tape` is active, on at least one tensor
with ``requires_grad``, are appended to that tape together with their backward
rule. :func:`backward` walks the tape in reverse once and writes ``.grad`` on
every leaf that requires it.
"""

import contextlib
import itertools
import logging
import os
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import BatchSizeError, ConfigurationError, ContractError, DimensionError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]

_DEFAULT_DTYPE: ContextVar[type] = ContextVar('retina_locator_default_dtype', default=np.float64)
_ACTIVE_TAPE: ContextVar[Optional['Tape']] = ContextVar('retina_locator_active_tape', default=None)
_DEBUG: ContextVar[bool] = ContextVar(
    'retina_locator_debug', default=os.getenv('RETINA_LOCATOR_DEBUG', '') not in ('', '0')
)
_ids = itertools.count()


def get_default_dtype() -> type:
    return _DEFAULT_DTYPE.get()


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    """Temporarily change the dtype used for new tensors (float64 or float32)."""
    dtype = np.dtype(dtype).type
    if dtype not in (np.float64, np.float32):
        raise ConfigurationError(f"Unsupported tensor dtype {dtype}")
    token = _DEFAULT_DTYPE.set(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE.reset(token)


@contextlib.contextmanager
def debug_checks(enabled: bool = True) -> Iterator[None]:
    """Fail on any non-finite op output produced from finite inputs."""
    token = _DEBUG.set(enabled)
    try:
        yield
    finally:
        _DEBUG.reset(token)


@contextlib.contextmanager
def no_tape() -> Iterator[None]:
    """Run operations without recording them."""
    token = _ACTIVE_TAPE.set(None)
    try:
        yield
    finally:
        _ACTIVE_TAPE.reset(token)


class Tensor:
    """Dense float array with optional gradient tracking."""

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None):
        self.data: np.ndarray = np.array(data, dtype=dtype or get_default_dtype())
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.id = next(_ids)

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> 'Tensor':
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        out.grad = None
        out.id = next(_ids)
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> 'Tensor':
        return Tensor._wrap(self.data, False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> 'Tensor':
        return transpose(self)

    def sum(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> 'Tensor':
        return mean(self, axis, keepdims)

    def reshape(self, *shape) -> 'Tensor':
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


@dataclass
class _Record:
    name: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; a tape belongs to the thread that entered it and
    is consumed by one :func:`backward` call.
    """

    def __init__(self):
        self.records: List[_Record] = []
        self.consumed = False
        self._tokens = []

    def __enter__(self) -> 'Tape':
        if self.consumed:
            raise ContractError("Tape was already consumed by backward()")
        self._tokens.append(_ACTIVE_TAPE.set(self))
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPE.reset(self._tokens.pop())
        return False

    def __len__(self) -> int:
        return len(self.records)

    def record(self, name: str, inputs: Tuple[Tensor, ...], output: Tensor, backward_fn):
        if self.consumed:
            raise ContractError("Tape was already consumed by backward()")
        self.records.append(_Record(name, inputs, output, backward_fn))


def _as_tensor(value, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=like.dtype if like is not None else None)


def _result(name: str, data: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn) -> Tensor:
    tape = _ACTIVE_TAPE.get()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, tracked)
    if tracked:
        tape.record(name, inputs, out, backward_fn)
    if _DEBUG.get() and not np.all(np.isfinite(data)):
        if all(np.all(np.isfinite(t.data)) for t in inputs):
            raise ContractError(f"{name} produced non-finite values from finite inputs")
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def backward(loss: Tensor, tape: Tape):
    """Populate ``.grad`` of every leaf that requires it with d(loss)/d(leaf).

    Gradients accumulate into existing ``.grad`` arrays so several losses can
    be summed before an optimizer step. The tape is consumed.

    Raises:
        ContractError: non-scalar loss, loss not recorded on the tape, or a
            tape that was already consumed
    """
    if tape.consumed:
        raise ContractError("Tape was already consumed by backward()")
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    produced = {rec.output.id for rec in tape.records}
    if loss.id not in produced:
        raise ContractError("Loss tensor is not on the tape")

    grads = {loss.id: np.ones_like(loss.data)}
    leaves = {}
    for rec in reversed(tape.records):
        g = grads.pop(rec.output.id, None)
        if g is None:
            continue
        for inp, ig in zip(rec.inputs, rec.backward(g)):
            if ig is None or not inp.requires_grad:
                continue
            ig = _unbroadcast(np.asarray(ig), inp.shape)
            grads[inp.id] = grads[inp.id] + ig if inp.id in grads else ig
            if inp.id not in produced:
                leaves[inp.id] = inp

    for leaf_id, leaf in leaves.items():
        g = grads[leaf_id].astype(leaf.dtype, copy=False)
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g

    tape.records.clear()
    tape.consumed = True


# Elementwise ------------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    return _result('add', a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    return _result('sub', a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    ad, bd = a.data, b.data
    return _result('mul', ad * bd, (a, b), lambda g: (g * bd, g * ad))


def div(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    ad, bd = a.data, b.data
    return _result('div', ad / bd, (a, b), lambda g: (g / bd, -g * ad / (bd * bd)))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _result('exp', out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return _result('log', np.log(xd), (x,), lambda g: (g / xd,))


def relu(x: Tensor) -> Tensor:
    """max(0, x); the subgradient at 0 is 0."""
    mask = x.data > 0
    return _result('relu', np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,),
                   lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    out = np.exp(-np.logaddexp(0, -x.data)).astype(x.dtype, copy=False)
    return _result('sigmoid', out, (x,), lambda g: (g * out * (1 - out),))


def square(x: Tensor) -> Tensor:
    return mul(x, x)


# Reductions and shape ---------------------------------------------------------

def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(a % ndim for a in axes)


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)
    shape = x.shape

    def _backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _result('sum', np.asarray(out), (x,), _backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(tensor_sum(x, axes, keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"Cannot reshape {src} to {tuple(shape)}") from e
    return _result('reshape', out, (x,), lambda g: (g.reshape(src),))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result('transpose', x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join tensors along ``axis``; every other dimension must agree."""
    if not tensors:
        raise DimensionError("concat() needs at least one tensor")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors:
        if t.ndim != ndim or any(t.shape[d] != tensors[0].shape[d] for d in range(ndim) if d != axis):
            raise DimensionError(
                f"concat() shapes differ off axis {axis}: {[tuple(t.shape) for t in tensors]}"
            )
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _result('concat', out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def slice_axis(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    axis = axis % x.ndim
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    shape = x.shape

    def _backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[index] = g
        return (full,)

    return _result('slice', x.data[index].copy(), (x,), _backward)


def split(x: Tensor, sizes: Sequence[int], axis: int = 0) -> List[Tensor]:
    """Inverse of :func:`concat` for the given part sizes."""
    if sum(sizes) != x.shape[axis]:
        raise DimensionError(f"split sizes {list(sizes)} do not cover axis of length {x.shape[axis]}")
    parts, start = [], 0
    for size in sizes:
        parts.append(slice_axis(x, start, start + size, axis))
        start += size
    return parts


def take_rows(x: Tensor, index: Sequence[int]) -> Tensor:
    """Rows ``x[index]`` (gather along axis 0)."""
    index = np.asarray(index, dtype=np.int64)
    shape = x.shape

    def _backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, index, g)
        return (full,)

    return _result('take_rows', x.data[index], (x,), _backward)


def put_rows(base: Tensor, index: Sequence[int], values: Tensor) -> Tensor:
    """Copy of ``base`` with rows ``index`` replaced by ``values`` (indices unique)."""
    index = np.asarray(index, dtype=np.int64)
    if values.shape != (len(index),) + base.shape[1:]:
        raise DimensionError(f"put_rows values {values.shape} do not match {len(index)} rows of {base.shape}")
    out = base.data.copy()
    out[index] = values.data

    def _backward(g):
        g_base = g.copy()
        g_base[index] = 0
        return (g_base, g[index])

    return _result('put_rows', out, (base, values), _backward)


# Linear algebra and convolution -----------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product; dA = dC B^T, dB = A^T dC."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _result('matmul', ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def conv2d(input: Tensor, kernel: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding.

    Args:
        input: (c_in, h, w) or batched (n, c_in, h, w)
        kernel: (c_out, c_in, kh, kw)
        bias: optional (c_out,)
        stride: step between output samples (>= 1)
        pad: zero padding on each spatial border

    Returns:
        (c_out, h', w') or (n, c_out, h', w') with h' = (h + 2 pad - kh) // stride + 1
    """
    x = input.data
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects (n,)c,h,w input and 4-D kernel, got {input.shape}, {kernel.shape}")
    n, c, h, w = x.shape
    c_out, c_k, kh, kw = kernel.shape
    if c_k != c:
        raise DimensionError(f"conv2d channel mismatch: input {input.shape}, kernel {kernel.shape}")
    if stride < 1 or pad < 0:
        raise DimensionError(f"conv2d needs stride >= 1 and pad >= 0, got stride={stride}, pad={pad}")
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    if oh <= 0 or ow <= 0 or kh > h + 2 * pad or kw > w + 2 * pad:
        raise DimensionError(
            f"conv2d output would be empty: input {input.shape}, kernel {kernel.shape}, stride {stride}, pad {pad}"
        )

    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    wmat = kernel.data.reshape(c_out, -1)
    out = (cols @ wmat.T).reshape(n, oh, ow, c_out).transpose(0, 3, 1, 2)
    if bias is not None:
        if bias.shape != (c_out,):
            raise DimensionError(f"conv2d bias must have shape ({c_out},), got {bias.shape}")
        out = out + bias.data.reshape(1, c_out, 1, 1)
    out = np.ascontiguousarray(out[0] if single else out)

    def _backward(g):
        g4 = g[None] if single else g
        gmat = g4.transpose(0, 2, 3, 1).reshape(n * oh * ow, c_out)
        g_kernel = (gmat.T @ cols).reshape(kernel.shape)
        g_cols = (gmat @ wmat).reshape(n, oh, ow, c, kh, kw)
        g_xp = np.zeros(xp.shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                g_xp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                    g_cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        g_x = g_xp[:, :, pad:pad + h, pad:pad + w] if pad else g_xp
        if single:
            g_x = g_x[0]
        if bias is None:
            return (g_x, g_kernel)
        return (g_x, g_kernel, g4.sum(axis=(0, 2, 3)))

    inputs = (input, kernel) if bias is None else (input, kernel, bias)
    return _result('conv2d', out, inputs, _backward)


# Normalization ----------------------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Exp-normalize along ``axis`` with max subtraction."""
    if x.ndim == 0 or x.shape[axis] == 0:
        raise DimensionError(f"softmax over an empty axis (shape {x.shape})")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result('softmax', out, (x,), _backward)


class RunningStats:
    """Batch-norm running mean/variance, kept as non-trainable tensors."""

    def __init__(self, num_features: int, momentum: float = 0.1, dtype=None):
        self.mean = Tensor(np.zeros(num_features), dtype=dtype)
        self.var = Tensor(np.ones(num_features), dtype=dtype)
        self.momentum = momentum


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running: RunningStats,
               mode: str = 'train', eps: float = 1e-5) -> Tensor:
    """Normalize (b, f) features, or (n, c, h, w) maps per channel.

    Train mode uses batch statistics and updates ``running`` with its momentum;
    eval mode uses the running statistics.
    """
    data = x.data
    if data.ndim == 2:
        axes, shape = (0,), (1, data.shape[1])
    elif data.ndim == 4:
        axes, shape = (0, 2, 3), (1, data.shape[1], 1, 1)
    else:
        raise DimensionError(f"batch_norm expects 2-D or 4-D input, got {x.shape}")
    features = data.shape[1]
    if gamma.shape != (features,) or beta.shape != (features,):
        raise DimensionError(f"batch_norm affine shapes {gamma.shape}/{beta.shape} do not match {features} features")

    count = int(np.prod([data.shape[a] for a in axes]))
    if mode == 'train':
        if data.shape[0] < 2:
            raise BatchSizeError(f"batch_norm in train mode needs batch size >= 2, got {data.shape[0]}")
        batch_mean = data.mean(axis=axes, keepdims=True)
        batch_var = data.var(axis=axes, keepdims=True)
        m = running.momentum
        running.mean.data = ((1 - m) * running.mean.data + m * batch_mean.reshape(-1)).astype(running.mean.dtype)
        unbiased = batch_var.reshape(-1) * count / max(count - 1, 1)
        running.var.data = ((1 - m) * running.var.data + m * unbiased).astype(running.var.dtype)
        mu, var = batch_mean, batch_var
    elif mode == 'eval':
        mu = running.mean.data.reshape(shape)
        var = running.var.data.reshape(shape)
    else:
        raise ConfigurationError(f"batch_norm mode must be 'train' or 'eval', got {mode!r}")

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (data - mu) * inv_std
    g_shape = gamma.data.reshape(shape)
    out = (g_shape * x_hat + beta.data.reshape(shape)).astype(x.dtype, copy=False)

    def _backward(g):
        g_gamma = (g * x_hat).sum(axis=axes)
        g_beta = g.sum(axis=axes)
        d_hat = g * g_shape
        if mode == 'train':
            g_x = inv_std / count * (
                count * d_hat
                - d_hat.sum(axis=axes, keepdims=True)
                - x_hat * (d_hat * x_hat).sum(axis=axes, keepdims=True)
            )
        else:
            g_x = d_hat * inv_std
        return (g_x, g_gamma, g_beta)

    return _result('batch_norm', out, (x, gamma, beta), _backward)


# Losses -----------------------------------------------------------------------

def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean softmax cross-entropy of (N, C) logits against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],) or logits.shape[0] == 0:
        raise DimensionError(f"cross_entropy needs (N, C) logits and N labels, got {logits.shape}, {labels.shape}")
    z = logits.data
    shifted = z - z.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(len(labels))
    n = len(labels)
    loss = -log_p[rows, labels].mean()

    def _backward(g):
        p = np.exp(log_p)
        p[rows, labels] -= 1.0
        return (g * p / n,)

    return _result('cross_entropy', np.asarray(loss, dtype=logits.dtype), (logits,), _backward)


def smooth_l1(pred: Tensor, target: ArrayLike, beta: float = 1.0) -> Tensor:
    """Summed smooth-L1 distance; quadratic below ``beta``."""
    target = np.asarray(target, dtype=pred.dtype).reshape(pred.shape)
    diff = pred.data - target
    abs_diff = np.abs(diff)
    quad = abs_diff < beta
    loss = np.where(quad, 0.5 * diff * diff / beta, abs_diff - 0.5 * beta).sum()

    def _backward(g):
        return (g * np.where(quad, diff / beta, np.sign(diff)),)

    return _result('smooth_l1', np.asarray(loss, dtype=pred.dtype), (pred,), _backward)


def binary_cross_entropy_with_logits(logits: Tensor, targets: ArrayLike) -> Tensor:
    """Mean binary cross-entropy computed from logits."""
    t = np.asarray(targets, dtype=logits.dtype).reshape(logits.shape)
    z = logits.data
    n = max(z.size, 1)
    loss = (np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))).sum() / n

    def _backward(g):
        p = np.exp(-np.logaddexp(0, -z))
        return (g * (p - t) / n,)

    return _result('bce_with_logits', np.asarray(loss, dtype=logits.dtype), (logits,), _backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Average (n, c, h, w) maps over space to (n, c)."""
    if x.ndim != 4:
        raise DimensionError(f"global_avg_pool expects (n, c, h, w), got {x.shape}")
    return mean(x, axis=(2, 3))


def detach(x: Tensor) -> Tensor:
    return x.detach()


def mse_loss(pred: Tensor, target: ArrayLike) -> Tensor:
    diff = sub(pred, Tensor(np.asarray(target).reshape(pred.shape), dtype=pred.dtype))
    return mean(mul(diff, diff))
