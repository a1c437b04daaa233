"""Local Spatial Aware layer.

Every region's relative coordinates are encoded into a spatial distribution
feature (per-point half plus a region-wide half shared by all slots). A
sigmoid generator turns it into one spatial distribution weight (SDW) per
shared-MLP level; each level gates the input of the next MLP step and the
last one gates the max pool.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from lsanet.autograd import (
    Tensor,
    concat,
    ew_mul,
    expand,
    gather,
    get_default_dtype,
    matmul,
    reduce_max,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    sigmoid,
)
from lsanet.errors import LayerConfigError, ShapeError
from lsanet.geometry import RegionGrouping
from lsanet.layers.base import Mode, MLPStage, ParamSet, glorot_uniform, shared_mlp_step


SPATIAL_WIDTH = 64


@dataclass
class LSALayerParams(ParamSet):
    """Weights of one LSA layer, stored input-major.

    w0, w1: 3×64 point/region spatial encoders. ws[0]: 128×F_1 (64×F_1
    without the region encoder), ws[l]: F_l×F_{l+1}. mlp[0]: C_in×F_1,
    mlp[l]: F_l×F_{l+1}, each with its batch norm.
    """
    mlp: list[MLPStage]
    w0: Tensor | None = None
    w1: Tensor | None = None
    ws: list[Tensor] = field(default_factory=list)
    use_region_encoder: bool = True
    use_modulated_pool: bool = True
    sdw_pre_relu: bool = False
    region_mean: Literal['all', 'valid'] = 'all'

    @classmethod
    def build(
            cls,
            c_in: int,
            widths: tuple[int, ...] | list[int],
            rng: np.random.Generator,
            dtype=None,
            use_lsa: bool = True,
            use_region_encoder: bool = True,
            use_modulated_pool: bool = True,
            sdw_pre_relu: bool = False,
            region_mean: Literal['all', 'valid'] = 'all',
    ) -> LSALayerParams:
        widths = list(widths)
        if not widths or any(w < 1 for w in widths):
            raise LayerConfigError(0, f'MLP widths must be positive, got {widths}')
        dtype = dtype or get_default_dtype()
        extents = [c_in] + widths
        mlp = [MLPStage.build(rng, extents[i], extents[i + 1], dtype) for i in range(len(widths))]
        params = cls(
            mlp=mlp,
            use_region_encoder=use_region_encoder,
            use_modulated_pool=use_modulated_pool,
            sdw_pre_relu=sdw_pre_relu,
            region_mean=region_mean,
        )
        n_levels = len(widths) if use_modulated_pool else len(widths) - 1
        if use_lsa and n_levels > 0:
            params.w0 = glorot_uniform(rng, 3, SPATIAL_WIDTH, dtype)
            if use_region_encoder:
                params.w1 = glorot_uniform(rng, 3, SPATIAL_WIDTH, dtype)
            spatial = 2 * SPATIAL_WIDTH if use_region_encoder else SPATIAL_WIDTH
            sdw_extents = [spatial] + widths[:n_levels]
            params.ws = [glorot_uniform(rng, sdw_extents[i], sdw_extents[i + 1], dtype) for i in range(n_levels)]
        params.validate()
        return params

    @property
    def use_lsa(self) -> bool:
        return bool(self.ws)

    @property
    def in_features(self) -> int:
        return self.mlp[0].in_features

    @property
    def out_features(self) -> int:
        return self.mlp[-1].out_features

    def validate(self) -> None:
        """Check the MLP chain and that SDW level l matches feature level l"""
        for i in range(1, len(self.mlp)):
            if self.mlp[i].in_features != self.mlp[i - 1].out_features:
                raise LayerConfigError(i, f'MLP input {self.mlp[i].in_features} '
                                          f'!= previous output {self.mlp[i - 1].out_features}')
        if not self.ws:
            return
        spatial = 2 * SPATIAL_WIDTH if self.w1 is not None else SPATIAL_WIDTH
        if self.ws[0].shape[0] != spatial:
            raise LayerConfigError(0, f'first SDW weight takes {self.ws[0].shape[0]} inputs, expected {spatial}')
        for level, weight in enumerate(self.ws):
            if level > 0 and weight.shape[0] != self.ws[level - 1].shape[1]:
                raise LayerConfigError(level, f'SDW weight input {weight.shape[0]} '
                                              f'!= previous output {self.ws[level - 1].shape[1]}')
            if weight.shape[1] != self.mlp[level].out_features:
                raise LayerConfigError(level, f'SDW extent {weight.shape[1]} '
                                              f'!= feature extent {self.mlp[level].out_features}')


@dataclass
class LSARecord:
    """Intermediate values of one forward pass, in the caller's slot order"""
    spatial: np.ndarray | None = None
    sdw: list[np.ndarray] = field(default_factory=list)
    features: list[np.ndarray] = field(default_factory=list)


def point_spatial_feature(rel_coords: Tensor, w0: Tensor) -> Tensor:
    """S_i^p: linear map of each relative coordinate, no activation"""
    if rel_coords.shape[-1] != 3 or w0.shape[0] != 3:
        raise ShapeError(f'point spatial feature: coords {rel_coords.shape} vs weight {w0.shape}')
    return matmul(rel_coords, w0)


def region_spatial_feature(rel_coords: Tensor, w1: Tensor, valid_mask: np.ndarray | None = None) -> Tensor:
    """S^g: the shared linear map averaged over the K slots of each region.

    With `valid_mask` the mean runs over real neighbors only.
    """
    if rel_coords.shape[-1] != 3 or w1.shape[0] != 3:
        raise ShapeError(f'region spatial feature: coords {rel_coords.shape} vs weight {w1.shape}')
    encoded = matmul(rel_coords, w1)
    if valid_mask is None:
        return reduce_mean(encoded, axis=-2)
    weights = valid_mask / valid_mask.sum(axis=-1, keepdims=True)
    return reduce_sum(ew_mul(encoded, Tensor(weights[..., None].astype(encoded.dtype))), axis=-2)


def spatial_distribution_feature(per_point: Tensor, regional: Tensor) -> Tensor:
    """S_i = [S_i^p, S^g] with S^g repeated over every slot of its region"""
    if per_point.shape[:-2] != regional.shape[:-1]:
        raise ShapeError(f'spatial distribution feature: {per_point.shape} vs {regional.shape}')
    return concat([per_point, expand(regional, axis=-2, size=per_point.shape[-2])], axis=-1)


def sdw_first(spatial: Tensor, ws1: Tensor, pre_relu: bool = False) -> Tensor:
    out = matmul(spatial, ws1)
    return sigmoid(relu(out) if pre_relu else out)


def sdw_next(e_prev: Tensor, ws: Tensor, pre_relu: bool = False) -> Tensor:
    out = matmul(e_prev, ws)
    return sigmoid(relu(out) if pre_relu else out)


def sdw_modulated_mlp_step(
        x: Tensor,
        e: Tensor,
        weight: Tensor,
        bn=None,
        mode: Mode = 'infer',
        activation: bool = True,
) -> Tensor:
    """Wm·(X ⊗ e), then batch norm (when given), then ReLU"""
    if x.shape != e.shape:
        raise ShapeError(f'modulated MLP: features {x.shape} vs SDWs {e.shape}')
    return shared_mlp_step(ew_mul(x, e), MLPStage(weight, bn), mode, activation)


def sdw_modulated_max_pool(x: Tensor, e: Tensor, valid_counts: np.ndarray | None = None) -> Tensor:
    """Max over the K slots of X ⊗ e.

    `valid_counts` is accepted for symmetry with the grouping; padded slots
    duplicate a real neighbor and cannot change a maximum.
    """
    if x.shape != e.shape:
        raise ShapeError(f'modulated max pool: features {x.shape} vs SDWs {e.shape}')
    return reduce_max(ew_mul(x, e), axis=-2)[0]


def canonical_slot_order(rel_coords: np.ndarray, x_in: np.ndarray | None = None) -> np.ndarray:
    """Slot permutation sorting each region by (x, y, z, first feature).

    Reductions run on the sorted layout, which makes every output of the
    layer independent of the order the neighbors arrived in.
    """
    keys = [rel_coords[..., 2], rel_coords[..., 1], rel_coords[..., 0]]
    if x_in is not None:
        keys.insert(0, x_in[..., 0])
    return np.lexsort(np.stack(keys), axis=-1)


def permute_slots(x: Tensor, order: np.ndarray) -> Tensor:
    """Reorder the K axis of a (B, M, K, C) tensor region by region"""
    b, m, k, c = x.shape
    flat_index = np.arange(m)[None, :, None] * k + order
    return gather(reshape(x, (b, m * k, c)), flat_index)


def _restore(values: np.ndarray, inverse: np.ndarray, single: bool) -> np.ndarray:
    out = np.take_along_axis(values, inverse[..., None], axis=-2)
    return out[0] if single else out


def lsa_layer_forward(
        grouping: RegionGrouping,
        x_in: Tensor | None,
        params: LSALayerParams,
        mode: Mode = 'infer',
        sdw_constant: float | None = None,
        recorder: LSARecord | None = None,
) -> Tensor:
    """Pooled region features Y of shape (..., M, F_L).

    Without `x_in` the relative coordinates are the input features.
    `sdw_constant` replaces every SDW with a constant (1.0 reproduces the
    plain set-abstraction path); `recorder` collects intermediates.
    """
    rel = grouping.relative_coords
    single = rel.ndim == 3
    if single:
        rel = rel[None]
    if x_in is None:
        x_in = Tensor(rel.astype(params.mlp[0].weight.dtype))
    elif single:
        x_in = reshape(x_in, (1,) + x_in.shape)
    if x_in.shape[:-1] != rel.shape[:-1]:
        raise ShapeError(f'LSA layer: features {x_in.shape} vs grouping {rel.shape}')
    if x_in.shape[-1] != params.in_features:
        raise LayerConfigError(0, f'layer takes {params.in_features} input channels, got {x_in.shape[-1]}')

    order = canonical_slot_order(rel, x_in.data)
    inverse = np.argsort(order, axis=-1)
    rel = np.take_along_axis(rel, order[..., None], axis=-2)
    x = permute_slots(x_in, order)

    levels: list[Tensor] = []
    if params.use_lsa:
        rel_t = Tensor(rel.astype(params.w0.dtype))
        spatial = point_spatial_feature(rel_t, params.w0)
        if params.w1 is not None:
            valid = None
            if params.region_mean == 'valid':
                mask = grouping.valid_mask if not single else grouping.valid_mask[None]
                valid = np.take_along_axis(mask, order, axis=-1).astype(rel.dtype)
            spatial = spatial_distribution_feature(spatial, region_spatial_feature(rel_t, params.w1, valid))
        if recorder is not None:
            recorder.spatial = _restore(spatial.data, inverse, single)
        e = sdw_first(spatial, params.ws[0], params.sdw_pre_relu)
        levels.append(e)
        for weight in params.ws[1:]:
            e = sdw_next(e, weight, params.sdw_pre_relu)
            levels.append(e)
        if sdw_constant is not None:
            levels = [Tensor(np.full(level.shape, sdw_constant, dtype=level.dtype)) for level in levels]

    x = shared_mlp_step(x, params.mlp[0], mode)
    features = [x]
    for level, stage in enumerate(params.mlp[1:], start=1):
        if level - 1 < len(levels):
            x = sdw_modulated_mlp_step(x, levels[level - 1], stage.weight, stage.bn, mode)
        else:
            x = shared_mlp_step(x, stage, mode)
        features.append(x)

    if params.use_modulated_pool and len(levels) == len(params.mlp):
        y = sdw_modulated_max_pool(x, levels[-1], grouping.valid_counts)
    else:
        y = reduce_max(x, axis=-2)[0]

    if recorder is not None:
        recorder.sdw = [_restore(level.data, inverse, single) for level in levels]
        recorder.features = [_restore(f.data, inverse, single) for f in features]
    if single:
        y = reshape(y, y.shape[1:])
    return y
