"""
Training-pair generation.

Full pairing emits every unordered pair once. Local pairing restricts each
reference sample to its kernel-ranked neighborhood: the smallest ranked prefix
holding the requested recall of the reference's same-class samples.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from config import RECALL_SLACK
from scripts.dek_model import DekModel, Task, gram
from scripts.errors import InsufficientSamplesError, ShapeMismatchError
from scripts.losses import regression_target

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairBatch:
    """
    Index pairs into a dataset with aligned per-pair targets.

    Attributes:
        pairs: (m x 2) integer array of sample indices, i != j, no unordered duplicates.
        targets: (m,) targets; {0, 1} for classification, [0, 1] for regression.
        task: Which objective the targets feed.
    """

    pairs: np.ndarray
    targets: np.ndarray
    task: Task = Task.CLASSIFICATION

    def __post_init__(self) -> None:
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        targets = np.asarray(self.targets, dtype=np.float64).ravel()
        if pairs.shape[0] != targets.shape[0]:
            raise ShapeMismatchError(f"{pairs.shape[0]} pairs but {targets.shape[0]} targets")
        if np.any(pairs[:, 0] == pairs[:, 1]):
            raise ValueError("a pair cannot join a sample with itself")
        unordered = np.sort(pairs, axis=1)
        if np.unique(unordered, axis=0).shape[0] != unordered.shape[0]:
            raise ValueError("duplicate unordered pairs")
        task = Task(self.task)
        if task is Task.CLASSIFICATION and not np.all(np.isin(targets, (0.0, 1.0))):
            raise ValueError("classification pair targets must be 0 or 1")
        if task is Task.REGRESSION and np.any((targets < 0.0) | (targets > 1.0)):
            raise ValueError("regression pair targets must lie in [0, 1]")
        pairs.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "task", task)

    def __len__(self) -> int:
        return self.pairs.shape[0]

    def unordered(self) -> set[tuple[int, int]]:
        return {(int(min(i, j)), int(max(i, j))) for i, j in self.pairs}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'i': self.pairs[:, 0], 'j': self.pairs[:, 1], 'target': self.targets})


def make_pairs_full(labels) -> PairBatch:
    """
    All n(n-1)/2 unordered pairs in lexicographic order; target 1 when the two
    labels are equal.
    """
    labels = np.asarray(labels)
    if labels.shape[0] < 2:
        raise InsufficientSamplesError("pairing needs at least 2 samples")
    rows, cols = np.triu_indices(labels.shape[0], k=1)
    targets = (labels[rows] == labels[cols]).astype(np.float64)
    return PairBatch(np.column_stack([rows, cols]), targets, Task.CLASSIFICATION)


def make_regression_pairs(targets, gamma: float) -> PairBatch:
    """All unordered pairs with kernel targets exp(-gamma |y_i - y_j|)."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape[0] < 2:
        raise InsufficientSamplesError("pairing needs at least 2 samples")
    rows, cols = np.triu_indices(targets.shape[0], k=1)
    kernel_targets = regression_target(targets[rows], targets[cols], gamma)
    return PairBatch(np.column_stack([rows, cols]), np.atleast_1d(kernel_targets), Task.REGRESSION)


def rank_references(similarities: np.ndarray, reference: int) -> np.ndarray:
    """
    Indices of every sample except ``reference`` in descending similarity;
    ties go to the lower index.
    """
    others = np.delete(np.arange(similarities.shape[0]), reference)
    order = np.lexsort((others, -similarities[others]))
    return others[order]


def recall_cutoff(level: float, n_relevant: int) -> int:
    """Number of relevant items needed to reach ``level`` recall."""
    return max(1, math.ceil(level * n_relevant - RECALL_SLACK))


def local_pairs_from_gram(
    similarities: np.ndarray,
    labels,
    recall_level: float,
    max_pairs_per_reference: Optional[int] = None,
) -> PairBatch:
    """
    Local pairing over a precomputed similarity matrix.

    For each reference r (ascending), the neighborhood is the shortest prefix
    of r's ranking containing ``recall_level`` of r's same-class samples.
    Same-class neighbors become positive pairs, others negative. A reference
    with no same-class partner takes the top ceil(recall_level * (n - 1))
    samples, all negative. Unordered duplicates keep their first occurrence.
    """
    similarities = np.asarray(similarities, dtype=np.float64)
    labels = np.asarray(labels)
    n = labels.shape[0]
    if n < 2:
        raise InsufficientSamplesError("pairing needs at least 2 samples")
    if similarities.shape != (n, n):
        raise ShapeMismatchError(f"similarity matrix {similarities.shape} does not match {n} labels")
    if not 0.0 < recall_level <= 1.0:
        raise ValueError(f"recall_level must lie in (0, 1], got {recall_level}")

    seen: set[tuple[int, int]] = set()
    pairs: list[tuple[int, int]] = []
    targets: list[float] = []
    singletons = 0
    for reference in range(n):
        ranking = rank_references(similarities, reference)
        same_class = labels[ranking] == labels[reference]
        n_same = int(same_class.sum())
        if n_same == 0:
            singletons += 1
            size = recall_cutoff(recall_level, n - 1)
        else:
            needed = recall_cutoff(recall_level, n_same)
            size = int(np.searchsorted(np.cumsum(same_class), needed)) + 1
        if max_pairs_per_reference is not None:
            size = min(size, max_pairs_per_reference)

        for position in range(size):
            other = int(ranking[position])
            key = (min(reference, other), max(reference, other))
            if key in seen:
                continue
            seen.add(key)
            pairs.append((reference, other))
            targets.append(1.0 if same_class[position] else 0.0)

    if singletons:
        logger.warning("%d reference samples have no same-class partner; they contribute negative pairs only", singletons)
    return PairBatch(np.array(pairs, dtype=np.int64).reshape(-1, 2), np.array(targets), Task.CLASSIFICATION)


def make_pairs_local(
    model: DekModel,
    samples: np.ndarray,
    labels,
    recall_level: float,
    max_pairs_per_reference: Optional[int] = None,
) -> PairBatch:
    """Local pairing ranked by the current model's kernel values."""
    similarities = gram(model, samples).values
    batch = local_pairs_from_gram(similarities, labels, recall_level, max_pairs_per_reference)
    logger.debug("Local pairing at recall %.3f produced %d pairs", recall_level, len(batch))
    return batch
