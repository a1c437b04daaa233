"""Spatial Feature Extractor branch.

Lifts the spatial input of each region to a wider representation, hands
`[lift(input), input]` to the backbone, and pools an enhanced copy of it
to the centroids for the next stage.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from lsanet.autograd import Tensor, add, concat, get_default_dtype, matmul, reduce_max
from lsanet.errors import ShapeError
from lsanet.geometry import RegionGrouping
from lsanet.layers.base import Mode, MLPStage, ParamSet, gather_neighbors, glorot_uniform, shared_mlp_step


@dataclass
class SFEParams(ParamSet):
    lift: MLPStage
    forward: MLPStage
    projection: Tensor | None = None
    combine: Literal['concat', 'sum'] = 'concat'

    @classmethod
    def build(
            cls,
            d_in: int,
            lift_width: int,
            rng: np.random.Generator,
            dtype=None,
            combine: Literal['concat', 'sum'] = 'concat',
    ) -> SFEParams:
        dtype = dtype or get_default_dtype()
        lift = MLPStage.build(rng, d_in, lift_width, dtype)
        projection = None
        if combine == 'sum':
            projection = glorot_uniform(rng, d_in, lift_width, dtype)
            inject_width = lift_width
        else:
            inject_width = d_in + lift_width
        forward = MLPStage.build(rng, inject_width, inject_width, dtype)
        return cls(lift=lift, forward=forward, projection=projection, combine=combine)

    @property
    def in_features(self) -> int:
        return self.lift.in_features

    @property
    def inject_width(self) -> int:
        return self.forward.in_features


@dataclass
class SFEState:
    """Spatial features carried to the next stage, one row per centroid"""
    features: Tensor  # (..., M, D)

    @property
    def point_count(self) -> int:
        return self.features.shape[-2]

    @property
    def width(self) -> int:
        return self.features.shape[-1]


def spatial_input(grouping: RegionGrouping, state: SFEState | None, dtype=None) -> Tensor:
    """Relative coordinates for the first stage, the gathered state afterwards"""
    if state is None:
        return Tensor(grouping.relative_coords.astype(dtype or get_default_dtype()))
    return gather_neighbors(state.features, grouping.neighbor_indices)


def sfe_forward(
        grouping: RegionGrouping,
        spatial_in: SFEState | None,
        params: SFEParams,
        mode: Mode = 'infer',
) -> tuple[Tensor, SFEState]:
    x = spatial_input(grouping, spatial_in, params.lift.weight.dtype)
    if x.shape[-1] != params.in_features:
        raise ShapeError(f'SFE stage takes {params.in_features} channels, got {x.shape}')
    lifted = shared_mlp_step(x, params.lift, mode)
    if params.combine == 'sum':
        inject = add(lifted, matmul(x, params.projection))
    else:
        inject = concat([lifted, x], axis=-1)
    pooled = reduce_max(shared_mlp_step(inject, params.forward, mode), axis=-2)[0]
    return inject, SFEState(pooled)


def inject_spatial(x: Tensor | None, inject: Tensor | None) -> Tensor:
    """Widen backbone features with the spatial injection along channels"""
    if inject is None:
        if x is None:
            raise ShapeError('nothing to inject into and no injection given')
        return x
    if x is None:
        return inject
    if x.shape[:-1] != inject.shape[:-1]:
        raise ShapeError(f'inject_spatial: features {x.shape} vs injection {inject.shape}')
    return concat([x, inject], axis=-1)
