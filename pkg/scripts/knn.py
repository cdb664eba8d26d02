"""
Kernel nearest neighbors.

Neighbors are the training samples with the LARGEST kernel values; a learned
kernel is a similarity, not a distance. Similarity ties go to the lower index.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from scripts.errors import ConfigError, EmptyBatchError, ShapeMismatchError
from scripts.gram_matrix import GramMatrix


def top_neighbors(gram_row, k: int) -> np.ndarray:
    """Indices of the ``k`` most similar training samples, most similar first."""
    gram_row = np.asarray(gram_row, dtype=np.float64).ravel()
    if gram_row.size == 0:
        raise EmptyBatchError("empty kernel row")
    if k < 1 or k > gram_row.size:
        raise ConfigError(f"k must lie in [1, {gram_row.size}], got {k}")
    order = np.lexsort((np.arange(gram_row.size), -gram_row))
    return order[:k]


def knn_classify(gram_row, train_labels: Sequence, k: int):
    """
    Majority label among the ``k`` most similar training samples. A vote tie
    goes to whichever tied class appears first in the similarity ranking.
    """
    train_labels = np.asarray(train_labels)
    if train_labels.shape[0] != np.size(gram_row):
        raise ShapeMismatchError(f"{np.size(gram_row)} kernel values but {train_labels.shape[0]} labels")
    neighbors = top_neighbors(gram_row, k)
    neighbor_labels = train_labels[neighbors]
    classes, counts = np.unique(neighbor_labels, return_counts=True)
    tied = set(classes[counts == counts.max()].tolist())
    for label in neighbor_labels:
        if label.item() in tied:
            return label.item()
    raise AssertionError("unreachable: a tied class always appears among the neighbors")


def knn_regress(gram_row, train_targets: Sequence[float], k: int, weighted: bool = False) -> float:
    """
    Mean target of the ``k`` most similar training samples; with ``weighted``
    the mean is weighted by kernel value (unweighted if all weights are zero).
    """
    train_targets = np.asarray(train_targets, dtype=np.float64)
    gram_row = np.asarray(gram_row, dtype=np.float64).ravel()
    if train_targets.shape[0] != gram_row.size:
        raise ShapeMismatchError(f"{gram_row.size} kernel values but {train_targets.shape[0]} targets")
    neighbors = top_neighbors(gram_row, k)
    weights = gram_row[neighbors]
    if weighted and weights.sum() > 0:
        return float(np.average(train_targets[neighbors], weights=weights))
    return float(train_targets[neighbors].mean())


def knn_predict(gram: GramMatrix, train_target, k: int, regression: bool = False, weighted: bool = False) -> np.ndarray:
    """Predictions for every query row of a (queries x training) Gram matrix."""
    if regression:
        return np.array([knn_regress(row, train_target, k, weighted) for row in gram.values], dtype=np.float64)
    return np.array([knn_classify(row, train_target, k) for row in gram.values])
