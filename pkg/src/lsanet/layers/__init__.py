"""Collection of network layers"""


# Local imports.
from .base import BatchNormParams, MLPStage, Mode, ParamSet, gather_neighbors, glorot_uniform, shared_mlp_step
from .lsa import (
    LSALayerParams,
    LSARecord,
    canonical_slot_order,
    lsa_layer_forward,
    permute_slots,
    point_spatial_feature,
    region_spatial_feature,
    sdw_first,
    sdw_modulated_max_pool,
    sdw_modulated_mlp_step,
    sdw_next,
    spatial_distribution_feature,
)
from .sfe import SFEParams, SFEState, inject_spatial, sfe_forward, spatial_input

# Public symbols
__all__ = [
    'BatchNormParams',
    'MLPStage',
    'Mode',
    'ParamSet',
    'gather_neighbors',
    'glorot_uniform',
    'shared_mlp_step',
    'LSALayerParams',
    'LSARecord',
    'canonical_slot_order',
    'lsa_layer_forward',
    'permute_slots',
    'point_spatial_feature',
    'region_spatial_feature',
    'sdw_first',
    'sdw_modulated_max_pool',
    'sdw_modulated_mlp_step',
    'sdw_next',
    'spatial_distribution_feature',
    'SFEParams',
    'SFEState',
    'inject_spatial',
    'sfe_forward',
    'spatial_input',
]
