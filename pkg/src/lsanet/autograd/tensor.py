from __future__ import annotations

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterator

import numpy as np

from lsanet.errors import ShapeError, TapeError

if TYPE_CHECKING:
    from lsanet.autograd.ops import Function


_default_dtype: ContextVar[np.dtype] = ContextVar('default_dtype', default=np.dtype(np.float32))
_active_tape: ContextVar['Tape | None'] = ContextVar('active_tape', default=None)


def get_default_dtype() -> np.dtype:
    return _default_dtype.get()


@contextmanager
def precision(dtype: Any) -> Iterator[np.dtype]:
    """Set the float type new tensors are created with.

    float32 is the training default; gradient checks run under float64.
    """
    token = _default_dtype.set(np.dtype(dtype))
    try:
        yield _default_dtype.get()
    finally:
        _default_dtype.reset(token)


def active_tape() -> Tape | None:
    return _active_tape.get()


@dataclass(frozen=True)
class Node:
    """Handle of a tensor produced by a recorded primitive"""
    tape: Tape
    index: int


@dataclass
class Record:
    fn: Function
    output: Tensor


class Tensor:
    """Dense float array that may take part in a recorded computation"""

    def __init__(
            self,
            data: Any,
            dtype: Any = None,
            requires_grad: bool = False,
            name: str | None = None,
    ) -> None:
        if dtype is None:
            is_float_array = isinstance(data, np.ndarray) and data.dtype.kind == 'f'
            dtype = data.dtype if is_float_array else get_default_dtype()
        self.data: np.ndarray = np.ascontiguousarray(np.asarray(data, dtype=dtype))
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node: Node | None = None
        self.name = name

    def __repr__(self) -> str:
        label = f' {self.name!r}' if self.name else ''
        return f'Tensor{label}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})'

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f'item() needs a single element, got shape {self.shape}')
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data, dtype=self.dtype)

    def __matmul__(self, other: Tensor) -> Tensor:
        from lsanet.autograd.ops import matmul
        return matmul(self, other)

    def __mul__(self, other: Tensor) -> Tensor:
        from lsanet.autograd.ops import ew_mul
        return ew_mul(self, as_tensor(other, self.dtype))

    def __add__(self, other: Tensor) -> Tensor:
        from lsanet.autograd.ops import add
        return add(self, as_tensor(other, self.dtype))


def as_tensor(value: Any, dtype: Any = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


class Tape:
    """Ordered record of primitive applications.

    Use as a context manager; primitives applied inside the block to tensors
    that require gradients are recorded in application order. A tape is
    confined to the context that opened it and can be differentiated once.
    """

    def __init__(self) -> None:
        self.records: list[Record] = []
        self.consumed = False
        self._token = None

    def __enter__(self) -> Tape:
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc_info) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def record(self, fn: Function, output: Tensor) -> None:
        if self.consumed:
            raise TapeError('cannot record on a tape that was already differentiated')
        output.node = Node(self, len(self.records))
        output.requires_grad = True
        self.records.append(Record(fn, output))


@dataclass
class GradientMap:
    """Gradients of every requires_grad leaf reached by a backward pass"""
    by_leaf: dict[int, np.ndarray] = field(default_factory=dict)
    leaves: dict[int, Tensor] = field(default_factory=dict)

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        return self.by_leaf[id(tensor)]

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self.by_leaf

    def __len__(self) -> int:
        return len(self.by_leaf)

    def items(self) -> Iterator[tuple[Tensor, np.ndarray]]:
        for key, leaf in self.leaves.items():
            yield leaf, self.by_leaf[key]


def backward(tape: Tape, loss: Tensor) -> GradientMap:
    """Reverse-mode accumulation of d(loss)/d(leaf) over a tape.

    Contributions from several uses of one tensor are summed. Leaves that
    were recorded as inputs but do not influence the loss get zeros.
    """
    if tape.consumed:
        raise TapeError('tape was already differentiated')
    if loss.size != 1:
        raise TapeError(f'loss must be a scalar, got shape {loss.shape}')
    if loss.node is None or loss.node.tape is not tape:
        raise TapeError('loss was not recorded on this tape')

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for record in reversed(tape.records[:loss.node.index + 1]):
        for tensor in record.fn.inputs:
            if tensor.requires_grad and tensor.node is None:
                leaves[id(tensor)] = tensor
        grad = pending.pop(id(record.output), None)
        if grad is None:
            continue
        for tensor, input_grad in zip(record.fn.inputs, record.fn.backward(grad)):
            if input_grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in pending:
                pending[key] = pending[key] + input_grad
            else:
                pending[key] = input_grad
    tape.consumed = True

    result = GradientMap()
    for key, leaf in leaves.items():
        grad = pending.get(key)
        if grad is None:
            grad = np.zeros_like(leaf.data)
        leaf.grad = grad
        result.by_leaf[key] = grad
        result.leaves[key] = leaf
    return result
