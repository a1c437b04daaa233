from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lsanet.errors import GeometryError


@dataclass
class PointCloud:
    """N×3 coordinates with optional per-point features and a class label"""
    coords: np.ndarray
    features: np.ndarray | None = None
    label: int | None = None

    def __post_init__(self) -> None:
        self.coords = np.asarray(self.coords)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise GeometryError(f'coords must be N×3, got {self.coords.shape}')
        if self.coords.shape[0] < 1:
            raise GeometryError('a point cloud needs at least one point')
        if not np.all(np.isfinite(self.coords)):
            raise GeometryError('point coordinates must be finite')
        if self.features is not None:
            self.features = np.asarray(self.features)
            if self.features.ndim != 2 or self.features.shape[0] != self.coords.shape[0]:
                raise GeometryError(
                    f'features {self.features.shape} do not match {self.coords.shape[0]} points'
                )

    def __len__(self) -> int:
        return self.coords.shape[0]

    def with_coords(self, coords: np.ndarray) -> PointCloud:
        return PointCloud(coords, self.features, self.label)


@dataclass
class RegionGrouping:
    """Centroids and their neighborhoods.

    Arrays carry an optional leading batch axis. Slots past `valid_counts`
    repeat the first real neighbor. Group-all regions have centroid index -1
    because their centroid is the coordinate mean, not a cloud point.
    """
    centroid_indices: np.ndarray   # (..., M)
    centroids: np.ndarray          # (..., M, 3)
    neighbor_indices: np.ndarray   # (..., M, K)
    relative_coords: np.ndarray    # (..., M, K, 3)
    valid_counts: np.ndarray       # (..., M)
    radius: float | None = None

    @property
    def num_regions(self) -> int:
        return self.neighbor_indices.shape[-2]

    @property
    def k(self) -> int:
        return self.neighbor_indices.shape[-1]

    @property
    def valid_mask(self) -> np.ndarray:
        """True for real neighbors, False for padding"""
        slots = np.arange(self.k)
        return slots < self.valid_counts[..., None]


def stack_groupings(groupings: list[RegionGrouping]) -> RegionGrouping:
    """Batch per-cloud groupings along a new leading axis"""
    first = groupings[0]
    return RegionGrouping(
        centroid_indices=np.stack([g.centroid_indices for g in groupings]),
        centroids=np.stack([g.centroids for g in groupings]),
        neighbor_indices=np.stack([g.neighbor_indices for g in groupings]),
        relative_coords=np.stack([g.relative_coords for g in groupings]),
        valid_counts=np.stack([g.valid_counts for g in groupings]),
        radius=first.radius,
    )
