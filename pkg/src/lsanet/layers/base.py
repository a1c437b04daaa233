from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterator, Literal, Mapping

import numpy as np

from lsanet.autograd import Tensor, batch_norm, gather, get_default_dtype, matmul, relu, reshape
from lsanet.errors import CheckpointError, ShapeError
from lsanet.settings import BN_EPS, BN_MOMENTUM


Mode = Literal['train', 'infer']


class ParamSet:
    """Mixin for dataclasses holding learnable tensors and buffers.

    Tensor fields are parameters, ndarray fields are buffers, nested
    ParamSets and lists of them are walked recursively. Names are dotted
    field paths, which double as checkpoint entry names.
    """

    def _children(self) -> Iterator[tuple[str, object]]:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                for i, item in enumerate(value):
                    yield f'{f.name}.{i}', item
            else:
                yield f.name, value

    def named_parameters(self, prefix: str = '') -> Iterator[tuple[str, Tensor]]:
        for name, value in self._children():
            if isinstance(value, Tensor):
                yield prefix + name, value
            elif isinstance(value, ParamSet):
                yield from value.named_parameters(f'{prefix}{name}.')

    def named_buffers(self, prefix: str = '') -> Iterator[tuple[str, np.ndarray]]:
        for name, value in self._children():
            if isinstance(value, np.ndarray):
                yield prefix + name, value
            elif isinstance(value, ParamSet):
                yield from value.named_buffers(f'{prefix}{name}.')

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: tensor.data for name, tensor in self.named_parameters()}
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, arrays: Mapping[str, np.ndarray]) -> None:
        """Copy stored values into the existing tensors and buffers, in place"""
        targets = {name: tensor.data for name, tensor in self.named_parameters()}
        targets.update(self.named_buffers())
        missing = sorted(set(targets) - set(arrays))
        if missing:
            raise CheckpointError(f'checkpoint lacks {len(missing)} entries, first {missing[0]!r}')
        for name, target in targets.items():
            source = arrays[name]
            if source.shape != target.shape:
                raise CheckpointError(f'{name}: stored {source.shape} vs model {target.shape}')
            target[...] = source


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=None, name: str | None = None) -> Tensor:
    """(fan_in, fan_out) weight drawn from U(±sqrt(6 / (fan_in + fan_out)))"""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    dtype = dtype or get_default_dtype()
    values = rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)
    return Tensor(values, requires_grad=True, name=name)


@dataclass
class BatchNormParams(ParamSet):
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS

    @classmethod
    def create(cls, channels: int, dtype=None) -> BatchNormParams:
        dtype = dtype or get_default_dtype()
        return cls(
            gamma=Tensor(np.ones(channels, dtype=dtype), requires_grad=True),
            beta=Tensor(np.zeros(channels, dtype=dtype), requires_grad=True),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
        )


@dataclass
class MLPStage(ParamSet):
    """One shared-MLP step: pointwise linear map, batch norm, ReLU"""
    weight: Tensor
    bn: BatchNormParams | None

    @classmethod
    def build(cls, rng: np.random.Generator, c_in: int, c_out: int, dtype=None, with_bn: bool = True) -> MLPStage:
        return cls(
            weight=glorot_uniform(rng, c_in, c_out, dtype),
            bn=BatchNormParams.create(c_out, dtype) if with_bn else None,
        )

    @property
    def in_features(self) -> int:
        return self.weight.shape[0]

    @property
    def out_features(self) -> int:
        return self.weight.shape[1]


def shared_mlp_step(x: Tensor, stage: MLPStage, mode: Mode, activation: bool = True) -> Tensor:
    if x.shape[-1] != stage.in_features:
        raise ShapeError(f'shared MLP expects {stage.in_features} channels, got input {x.shape}')
    out = matmul(x, stage.weight)
    if stage.bn is not None:
        out = batch_norm(out, stage.bn, mode)
    if activation:
        out = relu(out)
    return out


def gather_neighbors(features: Tensor, neighbor_indices: np.ndarray) -> Tensor:
    """Per-region neighbor features: (B, N, C) × (B, M, K) -> (B, M, K, C).

    Unbatched (N, C) × (M, K) inputs are accepted as well.
    """
    if neighbor_indices.ndim == 2:
        batched = reshape(features, (1,) + features.shape)
        out = gather(batched, neighbor_indices[None])
        return reshape(out, out.shape[1:])
    return gather(features, neighbor_indices)
