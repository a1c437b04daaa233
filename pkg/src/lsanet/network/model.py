"""LSANet classifier: stacked SFE + grouping + LSA stages and a FC head."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from lsanet.autograd import Tensor, add, ew_mul, get_default_dtype, matmul, relu, reshape
from lsanet.config import NetworkConfig
from lsanet.errors import ShapeError
from lsanet.geometry import PointCloud, RegionGrouping, group_batch
from lsanet.layers import (
    LSALayerParams,
    LSARecord,
    MLPStage,
    Mode,
    ParamSet,
    SFEParams,
    SFEState,
    gather_neighbors,
    glorot_uniform,
    inject_spatial,
    lsa_layer_forward,
    sfe_forward,
    shared_mlp_step,
)
from lsanet.validators import validate_network_config


logger = logging.getLogger(__name__)


@dataclass
class StageParams(ParamSet):
    lsa: LSALayerParams
    sfe: SFEParams | None = None


@dataclass
class ClassifierHead(ParamSet):
    """Hidden FC layers (linear, batch norm, ReLU, dropout) and the logit layer"""
    hidden: list[MLPStage]
    weight: Tensor
    bias: Tensor


@dataclass
class ModelParams(ParamSet):
    layers: list[StageParams]
    head: ClassifierHead
    config: NetworkConfig = field(repr=False, compare=False, default=None)

    @property
    def dtype(self) -> np.dtype:
        return self.head.weight.dtype


def build(config: NetworkConfig, seed: int, dtype=None) -> ModelParams:
    """Validate `config` and initialize every weight from `seed`"""
    validate_network_config(config)
    dtype = np.dtype(dtype or get_default_dtype())
    rng = np.random.default_rng(seed)
    stages = []
    features_width = 0
    spatial_width = 3
    lift_widths = iter(config.sfe_lift_widths)
    for layer in config.layers:
        sfe = None
        inject_width = 3
        if config.use_sfe and not layer.is_group_all:
            sfe = SFEParams.build(spatial_width, next(lift_widths), rng, dtype, combine=config.sfe_combine)
            spatial_width = inject_width = sfe.inject_width
        elif config.use_sfe and layer.is_group_all:
            inject_width = spatial_width
        lsa = LSALayerParams.build(
            features_width + inject_width,
            layer.widths,
            rng,
            dtype,
            use_lsa=config.use_lsa,
            use_region_encoder=config.use_region_encoder,
            use_modulated_pool=config.use_modulated_pool,
            sdw_pre_relu=config.sdw_pre_relu,
            region_mean=config.region_mean,
        )
        stages.append(StageParams(lsa=lsa, sfe=sfe))
        features_width = lsa.out_features

    extents = [features_width] + list(config.head_widths)
    hidden = [MLPStage.build(rng, extents[i], extents[i + 1], dtype) for i in range(len(config.head_widths))]
    head = ClassifierHead(
        hidden=hidden,
        weight=glorot_uniform(rng, extents[-1], config.num_classes, dtype),
        bias=Tensor(np.zeros(config.num_classes, dtype=dtype), requires_grad=True),
    )
    params = ModelParams(layers=stages, head=head, config=config)
    for name, tensor in params.named_parameters():
        tensor.name = name
    logger.debug('built %d stages, %d parameters', len(stages), count_parameters(params)[0])
    return params


def _batched_coords(clouds: PointCloud | Sequence[PointCloud] | np.ndarray) -> tuple[np.ndarray, bool]:
    if isinstance(clouds, PointCloud):
        return clouds.coords[None], True
    if isinstance(clouds, np.ndarray):
        if clouds.ndim == 2:
            return clouds[None], True
        return clouds, False
    sizes = {len(cloud) for cloud in clouds}
    if len(sizes) != 1:
        raise ShapeError(f'clouds in a batch must share one point count, got {sorted(sizes)}')
    return np.stack([cloud.coords for cloud in clouds]), False


def group_stages(config: NetworkConfig, coords: np.ndarray) -> list[RegionGrouping]:
    """Groupings of every stage for a (B, N, 3) batch; each stage groups the previous centroids"""
    first = config.layers[0].n_centroids
    if coords.shape[-2] < first:
        raise ShapeError(f'clouds have {coords.shape[-2]} points, the first layer samples {first}')
    groupings = []
    for layer in config.layers:
        grouping = group_batch(coords, layer.n_centroids, layer.radius, layer.k)
        groupings.append(grouping)
        coords = grouping.centroids
    return groupings


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: kept activations are scaled by 1 / (1 - rate)"""
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return ew_mul(x, Tensor(keep.astype(x.dtype)))


def head_forward(
        features: Tensor,
        head: ClassifierHead,
        mode: Mode,
        dropout_rate: float,
        rng: np.random.Generator | None,
) -> Tensor:
    x = features
    for stage in head.hidden:
        x = shared_mlp_step(x, stage, mode)
        if mode == 'train' and dropout_rate > 0:
            x = dropout(x, dropout_rate, rng or np.random.default_rng(0))
    return add(matmul(x, head.weight), head.bias)


def forward_classify(
        params: ModelParams,
        clouds: PointCloud | Sequence[PointCloud] | np.ndarray,
        mode: Mode = 'infer',
        *,
        rng: np.random.Generator | None = None,
        sdw_constant: float | None = None,
        recorder: list[LSARecord] | None = None,
        groupings: list[RegionGrouping] | None = None,
) -> Tensor:
    """Logits of shape (B, num_classes), or (num_classes,) for a single cloud.

    `rng` drives head dropout in train mode. `groupings` skips sampling and
    grouping; `recorder` receives one LSARecord per stage.
    """
    config = params.config
    coords, single = _batched_coords(clouds)
    if groupings is None:
        groupings = group_stages(config, coords)
    if len(groupings) != len(params.layers):
        raise ShapeError(f'{len(groupings)} groupings for {len(params.layers)} stages')

    features: Tensor | None = None
    state: SFEState | None = None
    for stage, grouping in zip(params.layers, groupings):
        x = gather_neighbors(features, grouping.neighbor_indices) if features is not None else None
        if stage.sfe is not None:
            inject, state = sfe_forward(grouping, state, stage.sfe, mode)
        elif state is not None:
            inject = gather_neighbors(state.features, grouping.neighbor_indices)
        else:
            inject = Tensor(grouping.relative_coords.astype(params.dtype))
        record = LSARecord() if recorder is not None else None
        features = lsa_layer_forward(
            grouping,
            inject_spatial(x, inject),
            stage.lsa,
            mode,
            sdw_constant=sdw_constant,
            recorder=record,
        )
        if recorder is not None:
            recorder.append(record)

    batch = features.shape[0]
    pooled = reshape(features, (batch, features.shape[-1]))
    logits = head_forward(pooled, params.head, mode, config.dropout_rate, rng)
    if single:
        logits = reshape(logits, (config.num_classes,))
    return logits


def count_parameters(params: ParamSet) -> tuple[int, dict[str, int]]:
    """Total learnable elements and a breakdown by module.

    Stage entries are keyed 'layers.<i>.lsa' / 'layers.<i>.sfe'; anything
    else is keyed by its first name component.
    """
    breakdown: dict[str, int] = {}
    for name, tensor in params.named_parameters():
        parts = name.split('.')
        key = '.'.join(parts[:3]) if parts[0] == 'layers' and len(parts) > 3 else parts[0]
        breakdown[key] = breakdown.get(key, 0) + tensor.size
    return sum(breakdown.values()), breakdown
