from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from lsanet.autograd.tensor import Tape, Tensor, backward


@dataclass(frozen=True)
class GradcheckResult:
    target: str
    worst_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.worst_rel_error < self.tolerance)


# Gradients with a smaller norm are compared in absolute terms; central
# differences at h=1e-5 carry roundoff of about 1e-10.
ZERO_GRADIENT_NORM = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error, guarded against all-zero gradients"""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), ZERO_GRADIENT_NORM)
    return float(np.linalg.norm(analytic - numeric) / scale)


def numeric_gradient(
        loss_fn: Callable[[], Tensor],
        tensor: Tensor,
        h: float = 1e-5,
        entries: np.ndarray | None = None,
) -> np.ndarray:
    """Central differences of a scalar loss with respect to `tensor`, in place.

    Only flat positions in `entries` are perturbed when given; the rest of
    the returned gradient stays zero.
    """
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size) if entries is None else entries:
        saved = flat[i]
        flat[i] = saved + h
        upper = loss_fn().item()
        flat[i] = saved - h
        lower = loss_fn().item()
        flat[i] = saved
        out[i] = (upper - lower) / (2.0 * h)
    return grad


def check_gradients(
        loss_fn: Callable[[], Tensor],
        inputs: Sequence[Tensor],
        h: float = 1e-5,
        max_entries: int | None = None,
        rng: np.random.Generator | None = None,
) -> list[float]:
    """Relative error between tape gradients and central differences, per input.

    `loss_fn` must rebuild the scalar loss from the current input values;
    it is called once under a tape and 2·size times per input without one.
    With `max_entries`, larger inputs are checked on a random subset of
    that many positions drawn from `rng`.
    """
    with Tape() as tape:
        loss = loss_fn()
    grads = backward(tape, loss)
    rng = rng or np.random.default_rng(0)
    errors = []
    for tensor in inputs:
        analytic = grads[tensor].reshape(-1)
        entries = None
        if max_entries is not None and tensor.size > max_entries:
            entries = np.sort(rng.choice(tensor.size, size=max_entries, replace=False))
        numeric = numeric_gradient(loss_fn, tensor, h, entries).reshape(-1)
        if entries is not None:
            analytic, numeric = analytic[entries], numeric[entries]
        errors.append(relative_error(analytic, numeric))
    return errors
