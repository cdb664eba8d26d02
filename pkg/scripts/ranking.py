"""
Ranking evaluation for identity detection: each query ranks all references by
descending similarity and precision is read off at fixed recall levels, then
averaged over queries.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from config import RECALL_GRID
from scripts.errors import EmptyBatchError, ShapeMismatchError
from scripts.gram_matrix import GramMatrix
from scripts.pairing import recall_cutoff

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray
    n_queries: int
    skipped_queries: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'recall': self.recall, 'precision': self.precision})


def query_precision(similarities: np.ndarray, relevant: np.ndarray, recall_grid: Sequence[float]) -> np.ndarray:
    """
    Interpolated precision of one ranking: at each recall level, the precision
    of the shortest prefix reaching that recall.
    """
    order = np.lexsort((np.arange(similarities.size), -similarities))
    hits = np.cumsum(relevant[order])
    n_relevant = int(hits[-1])
    precision = np.empty(len(recall_grid))
    for slot, level in enumerate(recall_grid):
        needed = recall_cutoff(level, n_relevant)
        position = int(np.searchsorted(hits, needed))
        precision[slot] = needed / (position + 1)
    return precision


def rank_and_pr_curve(
    gram: GramMatrix,
    query_labels: Sequence,
    reference_labels: Sequence,
    recall_grid: Sequence[float] = RECALL_GRID,
) -> PrCurve:
    """
    Average precision-recall curve over queries of a (queries x references)
    Gram matrix. Queries without any same-class reference are skipped and
    counted.
    """
    query_labels = np.asarray(query_labels)
    reference_labels = np.asarray(reference_labels)
    n_queries, n_references = gram.shape
    if n_queries == 0 or n_references == 0:
        raise EmptyBatchError("ranking needs at least one query and one reference")
    if query_labels.shape[0] != n_queries or reference_labels.shape[0] != n_references:
        raise ShapeMismatchError(
            f"Gram {gram.shape} does not match {query_labels.shape[0]} queries and {reference_labels.shape[0]} references"
        )

    curves = []
    skipped = 0
    for row, label in zip(gram.values, query_labels):
        relevant = reference_labels == label
        if not relevant.any():
            skipped += 1
            continue
        curves.append(query_precision(row, relevant, recall_grid))

    if skipped:
        logger.warning("Skipped %d queries with no same-class reference", skipped)
    if not curves:
        raise EmptyBatchError("no query has a same-class reference")
    return PrCurve(
        recall=np.asarray(recall_grid, dtype=np.float64),
        precision=np.mean(curves, axis=0),
        n_queries=len(curves),
        skipped_queries=skipped,
    )
