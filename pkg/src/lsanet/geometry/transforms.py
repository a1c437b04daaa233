from dataclasses import dataclass

import numpy as np

from lsanet.errors import GeometryError
from lsanet.geometry.cloud import PointCloud


@dataclass(frozen=True)
class AugmentOptions:
    rotate_z: bool = False
    jitter_sigma: float = 0.0
    jitter_clip: float = 0.05
    dropout_max_ratio: float = 0.0

    def __post_init__(self) -> None:
        if self.jitter_sigma < 0 or self.jitter_clip < 0:
            raise GeometryError('jitter sigma and clip must be non-negative')
        if not 0.0 <= self.dropout_max_ratio < 1.0:
            raise GeometryError(f'dropout ratio must lie in [0, 1), got {self.dropout_max_ratio}')

    @property
    def is_identity(self) -> bool:
        return not self.rotate_z and self.jitter_sigma == 0 and self.dropout_max_ratio == 0


def normalize_unit_sphere(cloud: PointCloud) -> PointCloud:
    """Center on the coordinate mean and scale the farthest point to norm 1"""
    coords = cloud.coords - cloud.coords.mean(axis=0)
    scale = np.sqrt((coords * coords).sum(axis=1).max())
    if scale > 0:
        coords = coords / scale
    return cloud.with_coords(coords)


def rotation_about_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def augment(cloud: PointCloud, seed: int | np.random.SeedSequence, opts: AugmentOptions) -> PointCloud:
    """Seeded rotation about the up axis, clipped jitter and point dropout.

    Dropout removes floor(r·N) points with r ~ U[0, dropout_max_ratio] and
    overwrites them with the first surviving point, so N is unchanged.
    """
    if opts.is_identity:
        return cloud
    rng = np.random.default_rng(seed)
    coords = cloud.coords.copy()
    dtype = coords.dtype

    if opts.rotate_z:
        theta = rng.uniform(0.0, 2.0 * np.pi)
        coords = coords @ rotation_about_z(theta).T.astype(dtype)

    if opts.jitter_sigma > 0:
        noise = np.clip(opts.jitter_sigma * rng.standard_normal(coords.shape), -opts.jitter_clip, opts.jitter_clip)
        coords = coords + noise.astype(dtype)

    if opts.dropout_max_ratio > 0:
        n = coords.shape[0]
        n_drop = int(np.floor(rng.uniform(0.0, opts.dropout_max_ratio) * n))
        if 0 < n_drop < n:
            dropped = np.zeros(n, dtype=bool)
            dropped[rng.permutation(n)[:n_drop]] = True
            first_kept = int(np.argmin(dropped))
            coords[dropped] = coords[first_kept]

    return cloud.with_coords(coords.astype(dtype, copy=False))
