from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from lsanet.errors import ShapeError
from lsanet.geometry import PointCloud, rotation_about_z
from lsanet.network.model import ModelParams, forward_classify
from lsanet.settings import BATCH_SIZE


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalResult:
    overall_accuracy: float
    per_class_accuracy: tuple[float, ...]
    total: int

    @property
    def mean_class_accuracy(self) -> float:
        """Unweighted mean of the recalls of classes present in the data"""
        recalls = np.asarray(self.per_class_accuracy)
        present = recalls[~np.isnan(recalls)]
        return float(present.mean()) if present.size else float('nan')

    def as_dict(self) -> dict:
        return {
            'overall_accuracy': self.overall_accuracy,
            'mean_class_accuracy': self.mean_class_accuracy,
            'per_class_accuracy': list(self.per_class_accuracy),
        }


def classification_metrics(predictions: np.ndarray, labels: np.ndarray, num_classes: int) -> EvalResult:
    """OA = correct / total; per-class recall is NaN for classes with no samples"""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    correct = predictions == labels
    per_class = []
    for c in range(num_classes):
        mask = labels == c
        per_class.append(float(correct[mask].mean()) if mask.any() else float('nan'))
    overall = float(correct.mean()) if labels.size else float('nan')
    return EvalResult(overall_accuracy=overall, per_class_accuracy=tuple(per_class), total=int(labels.size))


def subsample(cloud: PointCloud, n_points: int, rng: np.random.Generator) -> PointCloud:
    """Uniform subset of `n_points` points, kept in their original order"""
    n = len(cloud)
    if n_points > n:
        raise ShapeError(f'cannot take {n_points} points from a cloud of {n}')
    if n_points == n:
        return cloud
    keep = np.sort(rng.choice(n, size=n_points, replace=False))
    features = cloud.features[keep] if cloud.features is not None else None
    return PointCloud(cloud.coords[keep], features, cloud.label)


def repeat_points(cloud: PointCloud, n_points: int) -> PointCloud:
    """Cycle through the points of a sparse cloud until it holds `n_points`"""
    n = len(cloud)
    if n >= n_points:
        return cloud
    order = np.resize(np.arange(n), n_points)
    features = cloud.features[order] if cloud.features is not None else None
    return PointCloud(cloud.coords[order], features, cloud.label)


def predict(params: ModelParams, clouds: Sequence[PointCloud], batch_size: int = BATCH_SIZE) -> np.ndarray:
    """Argmax class of every cloud, infer mode"""
    predictions = []
    for start in range(0, len(clouds), batch_size):
        logits = forward_classify(params, list(clouds[start:start + batch_size]), 'infer')
        predictions.append(np.argmax(logits.data, axis=-1))
    return np.concatenate(predictions) if predictions else np.empty(0, dtype=np.intp)


def evaluate(
        params: ModelParams,
        dataset: Sequence[PointCloud],
        n_points: int,
        seed: int = 0,
        batch_size: int = BATCH_SIZE,
        rotate: bool = False,
) -> EvalResult:
    """Accuracy of `params` on `dataset` with each cloud cut down to `n_points`.

    Subsets (and rotations, with `rotate`) come from a generator per cloud
    index, so results do not depend on batch composition. Subsets smaller
    than the first layer's centroid count repeat their points up to it.
    """
    min_points = params.config.layers[0].n_centroids
    clouds = []
    for idx, cloud in enumerate(dataset):
        rng = np.random.default_rng([seed, idx])
        cloud = subsample(cloud, n_points, rng)
        cloud = repeat_points(cloud, min_points)
        if rotate:
            rotation = rotation_about_z(rng.uniform(0.0, 2.0 * np.pi)).astype(cloud.coords.dtype)
            cloud = cloud.with_coords(cloud.coords @ rotation.T)
        clouds.append(cloud)
    labels = np.array([cloud.label for cloud in clouds], dtype=np.intp)
    result = classification_metrics(predict(params, clouds, batch_size), labels, params.config.num_classes)
    logger.info(
        'evaluated %d clouds at %d points: OA %.4f mA %.4f',
        result.total, n_points, result.overall_accuracy, result.mean_class_accuracy,
    )
    return result
