"""Differentiable primitives.

Each primitive is a `Function` subclass: `forward` works on raw arrays and
saves what its gradient rule needs, `backward` maps the output gradient to
one gradient per input (None for inputs that take no gradient).
"""
from __future__ import annotations

from typing import Any, Literal

import numpy as np

from lsanet.autograd.tensor import Tensor, active_tape
from lsanet.errors import ShapeError
from lsanet.settings import BN_EPS, BN_MOMENTUM


class Function:
    def __init__(self, *inputs: Tensor) -> None:
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> tuple[Tensor, Function]:
        fn = cls(*inputs)
        out = Tensor(fn.forward(*(t.data for t in inputs), **kwargs))
        tape = active_tape()
        if tape is not None and any(t.requires_grad for t in inputs):
            tape.record(fn, out)
        return out, fn


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_trailing_broadcast(op: str, a: tuple[int, ...], b: tuple[int, ...]) -> None:
    try:
        result = np.broadcast_shapes(a, b)
    except ValueError:
        result = None
    if result != a:
        raise ShapeError(f'{op}: {b} does not broadcast onto {a}')


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f'axis {axis} out of range for rank {ndim}')
    return axis % ndim


class MatMul(Function):
    def forward(self, a, b):
        if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
            raise ShapeError(f'matmul: cannot contract {a.shape} with {b.shape}')
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        a, b = self.a, self.b
        grad_a = grad @ b.T
        grad_b = a.reshape(-1, a.shape[-1]).T @ grad.reshape(-1, b.shape[1])
        return grad_a, grad_b


class Mul(Function):
    def forward(self, a, b):
        _check_trailing_broadcast('ew_mul', a.shape, b.shape)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, _unbroadcast(grad * self.a, self.b.shape)


class Add(Function):
    def forward(self, a, b):
        _check_trailing_broadcast('add', a.shape, b.shape)
        self.b_shape = b.shape
        return a + b

    def backward(self, grad):
        return grad, _unbroadcast(grad, self.b_shape)


class Sigmoid(Function):
    def forward(self, x):
        out = np.empty_like(x)
        positive = x >= 0
        out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
        z = np.exp(x[~positive])
        out[~positive] = z / (1.0 + z)
        # keep the open interval (0, 1) where the float type saturates
        info = np.finfo(x.dtype)
        np.clip(out, info.smallest_subnormal, np.nextafter(x.dtype.type(1), x.dtype.type(0)), out=out)
        self.out = out
        return out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Relu(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return (grad * self.mask,)


class ReduceMax(Function):
    def forward(self, x, axis):
        self.axis = _normalize_axis(axis, x.ndim)
        if x.shape[self.axis] == 0:
            raise ShapeError(f'reduce_max over empty axis {axis} of {x.shape}')
        self.in_shape = x.shape
        # np.argmax returns the first occurrence, so ties go to the lowest index
        self.argmax = np.argmax(x, axis=self.axis)
        picked = np.expand_dims(self.argmax, self.axis)
        return np.take_along_axis(x, picked, axis=self.axis).squeeze(self.axis)

    def backward(self, grad):
        out = np.zeros(self.in_shape, dtype=grad.dtype)
        picked = np.expand_dims(self.argmax, self.axis)
        np.put_along_axis(out, picked, np.expand_dims(grad, self.axis), axis=self.axis)
        return (out,)


class ReduceMean(Function):
    def forward(self, x, axis):
        self.axis = _normalize_axis(axis, x.ndim)
        if x.shape[self.axis] == 0:
            raise ShapeError(f'reduce_mean over empty axis {axis} of {x.shape}')
        self.in_shape = x.shape
        return x.mean(axis=self.axis)

    def backward(self, grad):
        extent = self.in_shape[self.axis]
        spread = np.broadcast_to(np.expand_dims(grad / extent, self.axis), self.in_shape)
        return (np.ascontiguousarray(spread),)


class ReduceSum(Function):
    def forward(self, x, axis):
        self.in_shape = x.shape
        self.axis = None if axis is None else _normalize_axis(axis, x.ndim)
        return np.asarray(x.sum(axis=self.axis))

    def backward(self, grad):
        if self.axis is not None:
            grad = np.expand_dims(grad, self.axis)
        return (np.ascontiguousarray(np.broadcast_to(grad, self.in_shape)),)


class Concat(Function):
    def forward(self, *arrays, axis):
        first = arrays[0]
        self.axis = _normalize_axis(axis, first.ndim)
        for other in arrays[1:]:
            same_rank = other.ndim == first.ndim
            if not same_rank or any(
                    d1 != d2 for i, (d1, d2) in enumerate(zip(first.shape, other.shape)) if i != self.axis
            ):
                raise ShapeError(f'concat along axis {axis}: {first.shape} vs {other.shape}')
        self.splits = np.cumsum([a.shape[self.axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=self.axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=self.axis))


class Expand(Function):
    """Insert `axis` and repeat the input `size` times along it"""

    def forward(self, x, axis, size):
        self.axis = _normalize_axis(axis, x.ndim + 1)
        shape = list(x.shape)
        shape.insert(self.axis, size)
        return np.ascontiguousarray(np.broadcast_to(np.expand_dims(x, self.axis), shape))

    def backward(self, grad):
        return (grad.sum(axis=self.axis),)


class Reshape(Function):
    def forward(self, x, shape):
        self.in_shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class Gather(Function):
    """out[b, s...] = x[b, index[b, s...]] for x of shape (B, N, C)"""

    def forward(self, x, index):
        if x.ndim != 3 or index.shape[0] != x.shape[0]:
            raise ShapeError(f'gather: features {x.shape} vs index {index.shape}')
        self.in_shape = x.shape
        self.batch = np.arange(x.shape[0]).reshape((-1,) + (1,) * (index.ndim - 1))
        self.index = index
        return x[self.batch, index]

    def backward(self, grad):
        out = np.zeros(self.in_shape, dtype=grad.dtype)
        np.add.at(out, (self.batch, self.index), grad)
        return (out,)


class BatchNorm(Function):
    def forward(self, x, gamma, beta, mode, running_mean, running_var, momentum, eps):
        channels = gamma.shape[0]
        if x.shape[-1] != channels:
            raise ShapeError(f'batch_norm: input {x.shape} has {x.shape[-1]} channels, params have {channels}')
        self.axes = tuple(range(x.ndim - 1))
        self.gamma = gamma
        if mode == 'train':
            mean = x.mean(axis=self.axes)
            var = x.var(axis=self.axes)
            running_mean *= momentum
            running_mean += (1.0 - momentum) * mean
            running_var *= momentum
            running_var += (1.0 - momentum) * var
        else:
            mean, var = running_mean, running_var
        self.mode = mode
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.x_hat = (x - mean) * self.inv_std
        return gamma * self.x_hat + beta

    def backward(self, grad):
        grad_gamma = (grad * self.x_hat).sum(axis=self.axes)
        grad_beta = grad.sum(axis=self.axes)
        grad_x_hat = grad * self.gamma
        if self.mode != 'train':
            return grad_x_hat * self.inv_std, grad_gamma, grad_beta
        n = grad.size // grad.shape[-1]
        grad_x = (self.inv_std / n) * (
            n * grad_x_hat
            - grad_x_hat.sum(axis=self.axes)
            - self.x_hat * (grad_x_hat * self.x_hat).sum(axis=self.axes)
        )
        return grad_x, grad_gamma, grad_beta


class SoftmaxCrossEntropy(Function):
    def forward(self, logits, labels):
        if logits.ndim != 2 or labels.shape != (logits.shape[0],):
            raise ShapeError(f'cross_entropy: logits {logits.shape} vs labels {labels.shape}')
        if labels.min(initial=0) < 0 or labels.max(initial=0) >= logits.shape[1]:
            raise ShapeError(f'cross_entropy: labels outside [0, {logits.shape[1]})')
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_probs = shifted - log_norm
        rows = np.arange(logits.shape[0])
        self.probs = np.exp(log_probs)
        self.labels = labels
        return np.asarray(-log_probs[rows, labels].mean())

    def backward(self, grad):
        batch = self.probs.shape[0]
        out = self.probs.copy()
        out[np.arange(batch), self.labels] -= 1.0
        return (out * (grad / batch),)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)[0]


def ew_mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(a, b)[0]


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)[0]


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)[0]


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)[0]


def reduce_max(x: Tensor, axis: int) -> tuple[Tensor, np.ndarray]:
    out, fn = ReduceMax.apply(x, axis=axis)
    return out, fn.argmax


def reduce_mean(x: Tensor, axis: int) -> Tensor:
    return ReduceMean.apply(x, axis=axis)[0]


def reduce_sum(x: Tensor, axis: int | None = None) -> Tensor:
    return ReduceSum.apply(x, axis=axis)[0]


def concat(tensors: list[Tensor] | tuple[Tensor, ...], axis: int = -1) -> Tensor:
    if len(tensors) == 1:
        return tensors[0]
    return Concat.apply(*tensors, axis=axis)[0]


def expand(x: Tensor, axis: int, size: int) -> Tensor:
    return Expand.apply(x, axis=axis, size=size)[0]


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return Reshape.apply(x, shape=shape)[0]


def gather(x: Tensor, index: np.ndarray) -> Tensor:
    return Gather.apply(x, index=np.asarray(index, dtype=np.intp))[0]


def batch_norm(x: Tensor, params: Any, mode: Literal['train', 'infer']) -> Tensor:
    """Normalize over every axis but the last (channel) one.

    `params` is a `BatchNormParams`; its running statistics are updated in
    place in train mode.
    """
    momentum = getattr(params, 'momentum', BN_MOMENTUM)
    eps = getattr(params, 'eps', BN_EPS)
    return BatchNorm.apply(
        x, params.gamma, params.beta,
        mode=mode,
        running_mean=params.running_mean,
        running_var=params.running_var,
        momentum=momentum,
        eps=eps,
    )[0]


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-softmax at the labels, via a stable log-sum-exp"""
    return SoftmaxCrossEntropy.apply(logits, labels=np.asarray(labels, dtype=np.intp))[0]
