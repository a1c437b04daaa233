import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from lsanet.autograd.tensor import Tensor
from lsanet.errors import NonFiniteGradientError, ShapeError
from lsanet.settings import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    BASE_LR,
    DECAY_INTERVAL_EPOCHS,
    DECAY_RATIO,
    LR_FLOOR,
)


logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Adam moments plus the step-decay learning-rate schedule"""
    base_lr: float = BASE_LR
    decay_ratio: float = DECAY_RATIO
    decay_interval_epochs: int = DECAY_INTERVAL_EPOCHS
    lr_floor: float = LR_FLOOR
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPS
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def effective_lr(self, epoch: int) -> float:
        decayed = self.base_lr * self.decay_ratio ** (epoch // self.decay_interval_epochs)
        return max(decayed, self.lr_floor)


def adam_step(
        state: AdamState,
        params: Mapping[str, Tensor],
        grads: Mapping[str, np.ndarray],
        epoch: int,
) -> float:
    """Apply one bias-corrected Adam update in place and return the lr used.

    The whole step is refused when any gradient is non-finite; parameters
    and moments are left untouched in that case.
    """
    for name, grad in grads.items():
        if name not in params:
            raise KeyError(f'gradient for unknown parameter {name!r}')
        if grad.shape != params[name].shape:
            raise ShapeError(f'{name}: gradient {grad.shape} vs parameter {params[name].shape}')
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(f'non-finite gradient for {name!r}, step rejected')

    lr = state.effective_lr(epoch)
    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t
    for name, grad in grads.items():
        param = params[name]
        m = state.m.setdefault(name, np.zeros_like(param.data))
        v = state.v.setdefault(name, np.zeros_like(param.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= (lr * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(param.dtype, copy=False)
    logger.debug('adam step %d at lr %.6g', state.t, lr)
    return lr
