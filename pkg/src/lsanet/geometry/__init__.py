"""Point-set sampling, grouping and preprocessing"""


# Local imports.
from .cloud import PointCloud, RegionGrouping, stack_groupings
from .sampling import (
    ball_query,
    farthest_point_sample,
    group_all,
    group_batch,
    sample_and_group,
    squared_distances,
)
from .transforms import AugmentOptions, augment, normalize_unit_sphere, rotation_about_z

# Public symbols
__all__ = [
    'PointCloud',
    'RegionGrouping',
    'stack_groupings',
    'ball_query',
    'farthest_point_sample',
    'group_all',
    'group_batch',
    'sample_and_group',
    'squared_distances',
    'AugmentOptions',
    'augment',
    'normalize_unit_sphere',
    'rotation_about_z',
]
