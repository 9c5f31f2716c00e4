"""
Colour-only reference classifier and label/bias statistics
"""

import logging
from typing import Tuple

import numpy as np

from src.utils.errors import DataError

from .biased import BiasedDataset, DatasetSplit

logger = logging.getLogger(__name__)

FOREGROUND_THRESHOLD = 0.5


def mean_colors(split: DatasetSplit) -> np.ndarray:
    """
    Mean RGB over each image's foreground (pixels whose brightest channel
    exceeds the threshold). Shape (n, 3).
    """
    images = split.images.astype(np.float64)
    mask = images.max(axis=1, keepdims=True) > FOREGROUND_THRESHOLD
    weight = np.maximum(mask.sum(axis=(2, 3)), 1)
    return (images * mask).sum(axis=(2, 3)) / weight


def color_only_baseline(ds: BiasedDataset) -> Tuple[float, float]:
    """
    Nearest-mean-colour classifier fitted on train.

    Returns (accuracy on test_aligned, accuracy on test_conflicting).
    """
    train_colors = mean_colors(ds.train)
    centroids = np.zeros((ds.num_classes, 3))
    for c in range(ds.num_classes):
        members = train_colors[ds.train.labels == c]
        if len(members) == 0:
            raise DataError(f"class {c} has no training samples")
        centroids[c] = members.mean(axis=0)

    def accuracy(split: DatasetSplit) -> float:
        if len(split) == 0:
            return 0.0
        colors = mean_colors(split)
        distances = ((colors[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        return float(np.mean(np.argmin(distances, axis=1) == split.labels))

    aligned, conflicting = accuracy(ds.test_aligned), accuracy(ds.test_conflicting)
    logger.info(f"Colour-only baseline: aligned {aligned:.4f}, conflicting {conflicting:.4f}")
    return aligned, conflicting


def mutual_information(labels: np.ndarray, attrs: np.ndarray) -> float:
    """Plug-in mutual information (nats) between two discrete columns"""
    labels = np.asarray(labels)
    attrs = np.asarray(attrs)
    n = labels.shape[0]
    if n == 0:
        return 0.0
    _, label_idx = np.unique(labels, return_inverse=True)
    _, attr_idx = np.unique(attrs, return_inverse=True)
    joint = np.zeros((label_idx.max() + 1, attr_idx.max() + 1))
    np.add.at(joint, (label_idx, attr_idx), 1.0)
    joint /= n
    outer = joint.sum(axis=1, keepdims=True) * joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
