"""Tensors, differentiable primitives, optimizer and checkpoints"""


# Local imports.
from .tensor import GradientMap, Tape, Tensor, active_tape, backward, get_default_dtype, precision
from .ops import (
    add,
    batch_norm,
    concat,
    cross_entropy,
    ew_mul,
    expand,
    gather,
    matmul,
    reduce_max,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    sigmoid,
)
from .optim import AdamState, adam_step
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradcheckResult, check_gradients, numeric_gradient, relative_error

# Public symbols
__all__ = [
    'GradientMap',
    'Tape',
    'Tensor',
    'active_tape',
    'backward',
    'get_default_dtype',
    'precision',
    'add',
    'batch_norm',
    'concat',
    'cross_entropy',
    'ew_mul',
    'expand',
    'gather',
    'matmul',
    'reduce_max',
    'reduce_mean',
    'reduce_sum',
    'relu',
    'reshape',
    'sigmoid',
    'AdamState',
    'adam_step',
    'load_checkpoint',
    'save_checkpoint',
    'GradcheckResult',
    'check_gradients',
    'numeric_gradient',
    'relative_error',
]
