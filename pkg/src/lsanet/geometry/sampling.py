"""Farthest point sampling and neighborhood grouping.

All distance tests use squared Euclidean distances computed as the sum of
squared coordinate differences, in the precision of the input coordinates.
"""
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from lsanet.errors import DegenerateRegionError, GeometryError
from lsanet.geometry.cloud import PointCloud, RegionGrouping, stack_groupings
from lsanet.settings import THREADS


logger = logging.getLogger(__name__)


def _coords_of(cloud: PointCloud | np.ndarray) -> np.ndarray:
    coords = cloud.coords if isinstance(cloud, PointCloud) else np.asarray(cloud)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise GeometryError(f'expected N×3 coordinates, got {coords.shape}')
    return coords


def squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(M, N) squared distances between M centers and N points"""
    diff = points[None, :, :] - centers[:, None, :]
    return (diff * diff).sum(axis=-1)


def farthest_point_sample(cloud: PointCloud | np.ndarray, m: int) -> np.ndarray:
    """Greedy max-min selection of `m` point indices.

    Starts from index 0; each pick maximizes the squared distance to the
    points already chosen, ties going to the lowest index.
    """
    coords = _coords_of(cloud)
    n = coords.shape[0]
    if not 1 <= m <= n:
        raise GeometryError(f'cannot sample {m} centroids from {n} points')
    selected = np.empty(m, dtype=np.intp)
    selected[0] = 0
    nearest = squared_distances(coords, coords[:1])[0]
    nearest[0] = -1
    for i in range(1, m):
        pick = int(np.argmax(nearest))
        selected[i] = pick
        np.minimum(nearest, squared_distances(coords, coords[pick:pick + 1])[0], out=nearest)
        nearest[pick] = -1
    return selected


def ball_query(
        cloud: PointCloud | np.ndarray,
        centroids: np.ndarray,
        radius: float,
        k: int,
) -> RegionGrouping:
    """First `k` points (ascending index) within `radius` of every centroid.

    `centroids` is either an index array into the cloud or an M×3 array of
    external coordinates. Regions with fewer than `k` hits are padded with
    their first hit.
    """
    coords = _coords_of(cloud)
    if radius <= 0:
        raise GeometryError(f'radius must be positive, got {radius}')
    if k < 1:
        raise GeometryError(f'K must be at least 1, got {k}')
    centroids = np.asarray(centroids)
    if centroids.dtype.kind in 'iu':
        centroid_indices = centroids.astype(np.intp)
        centers = coords[centroid_indices]
    else:
        centers = centroids.astype(coords.dtype, copy=False)
        centroid_indices = np.full(centers.shape[0], -1, dtype=np.intp)

    n = coords.shape[0]
    radius_sq = np.asarray(radius, dtype=coords.dtype) ** 2
    inside = squared_distances(coords, centers) <= radius_sq
    counts = inside.sum(axis=1)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        nearest = squared_distances(coords, centers[empty[:1]]).min()
        raise DegenerateRegionError(
            f'{empty.size} region(s) have no point within radius {radius}; '
            f'region {int(empty[0])} at {centers[empty[0]].tolist()} '
            f'has its nearest point at squared distance {float(nearest):.6g}'
        )

    # non-members sort after every real index
    order = np.sort(np.where(inside, np.arange(n), n), axis=1)[:, :k]
    if order.shape[1] < k:
        order = np.pad(order, ((0, 0), (0, k - order.shape[1])), constant_values=n)
    neighbor_indices = np.where(order == n, order[:, :1], order)
    relative = coords[neighbor_indices] - centers[:, None, :]
    return RegionGrouping(
        centroid_indices=centroid_indices,
        centroids=centers,
        neighbor_indices=neighbor_indices,
        relative_coords=relative,
        valid_counts=np.minimum(counts, k),
        radius=radius,
    )


def group_all(cloud: PointCloud | np.ndarray) -> RegionGrouping:
    """A single region holding every point, centered on the coordinate mean"""
    coords = _coords_of(cloud)
    n = coords.shape[0]
    center = coords.mean(axis=0, keepdims=True)
    return RegionGrouping(
        centroid_indices=np.full(1, -1, dtype=np.intp),
        centroids=center,
        neighbor_indices=np.arange(n, dtype=np.intp)[None, :],
        relative_coords=(coords - center)[None, :, :],
        valid_counts=np.array([n], dtype=np.intp),
        radius=None,
    )


def sample_and_group(coords: np.ndarray, n_centroids: int, radius: float | None, k: int) -> RegionGrouping:
    """FPS + ball query for one cloud, or group-all when one region is asked for"""
    if n_centroids == 1:
        return group_all(coords)
    return ball_query(coords, farthest_point_sample(coords, n_centroids), radius, k)


def group_batch(coords: np.ndarray, n_centroids: int, radius: float | None, k: int) -> RegionGrouping:
    """Group every cloud of a (B, N, 3) batch; clouds are processed concurrently"""
    if coords.ndim != 3:
        raise GeometryError(f'expected a (B, N, 3) batch, got {coords.shape}')
    if coords.shape[0] == 1 or THREADS == 1:
        groupings = [sample_and_group(c, n_centroids, radius, k) for c in coords]
    else:
        with ThreadPoolExecutor(max_workers=THREADS) as pool:
            groupings = list(pool.map(lambda c: sample_and_group(c, n_centroids, radius, k), coords))
    return stack_groupings(groupings)
