"""
RBF-kernel baseline: the Gaussian kernel and a cross-validated grid search of
its hyperparameters on the training split.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.metrics.pairwise import rbf_kernel as sk_rbf_kernel
from sklearn.model_selection import KFold, StratifiedKFold

from config import DEFAULT_CV_FOLDS, DEFAULT_RBF_C_GRID, DEFAULT_RBF_GAMMA_GRID, DEFAULT_SVM_TOL
from scripts.DataManager import Dataset
from scripts.dek_model import Task
from scripts.errors import DegenerateTargetError, EmptyBatchError
from scripts.gram_matrix import GramMatrix
from scripts.knn import knn_predict
from scripts.metrics import metric_accuracy, metric_r2
from scripts.svm import svm_fit, svm_predict

logger = logging.getLogger(__name__)


def rbf_kernel(x_a: np.ndarray, x_b: Optional[np.ndarray] = None, gamma: float = 1.0) -> GramMatrix:
    """exp(-gamma * ||x - y||^2); symmetric (and exactly so) when ``x_b`` is omitted."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    x_a = np.asarray(x_a, dtype=np.float64)
    if x_b is None:
        values = sk_rbf_kernel(x_a, gamma=gamma)
        return GramMatrix((values + values.T) / 2.0, symmetric_flag=True)
    return GramMatrix(sk_rbf_kernel(x_a, np.asarray(x_b, dtype=np.float64), gamma=gamma))


@dataclass(frozen=True)
class GridSearchResult:
    gamma: float
    C: float
    score: float
    # (gamma, C, mean score over usable folds, usable folds)
    table: list = field(default_factory=list)
    skipped_folds: int = 0


def _folds(data: Dataset, n_folds: int, seed: int):
    if data.task is Task.CLASSIFICATION:
        _, counts = np.unique(data.target, return_counts=True)
        if counts.min() >= n_folds:
            return StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=seed).split(data.features, data.target)
    return KFold(n_splits=n_folds, shuffle=True, random_state=seed).split(data.features)


def _fold_score(train: Dataset, valid: Dataset, gamma: float, C: float, k: int, tol: float) -> float:
    cross = rbf_kernel(valid.features, train.features, gamma)
    if train.task is Task.CLASSIFICATION:
        machine = svm_fit(rbf_kernel(train.features, gamma=gamma), train.target, C=C, tol=tol)
        return metric_accuracy(svm_predict(machine, cross), valid.target)
    predictions = knn_predict(cross, train.target, min(k, len(train)), regression=True)
    return metric_r2(predictions, valid.target)


def rbf_grid_search(
    data: Dataset,
    gamma_grid: Sequence[float] = DEFAULT_RBF_GAMMA_GRID,
    C_grid: Sequence[float] = DEFAULT_RBF_C_GRID,
    folds: int = DEFAULT_CV_FOLDS,
    seed: int = 0,
    k: int = 5,
    tol: float = DEFAULT_SVM_TOL,
) -> GridSearchResult:
    """
    K-fold cross-validated search over gamma x C, scanned gamma-major.

    Classification scores SVM/RBF accuracy; regression scores KNN/RBF R^2 and
    ignores C. Folds whose training part holds a single class (or whose
    validation targets are constant) are skipped with a warning. Ties keep the
    first cell in scan order.
    """
    if not gamma_grid or not C_grid:
        raise ValueError("gamma and C grids must be nonempty")
    splits = [(data.subset(train_index), data.subset(valid_index)) for train_index, valid_index in _folds(data, folds, seed)]
    if data.task is Task.REGRESSION:
        C_grid = C_grid[:1]

    table = []
    best: Optional[tuple[float, float, float]] = None
    skipped = 0
    for gamma in gamma_grid:
        for C in C_grid:
            scores = []
            for train, valid in splits:
                if train.task is Task.CLASSIFICATION and np.unique(train.target).size < 2:
                    skipped += 1
                    continue
                try:
                    scores.append(_fold_score(train, valid, gamma, C, k, tol))
                except DegenerateTargetError:
                    skipped += 1
            if not scores:
                continue
            mean_score = float(np.mean(scores))
            table.append((float(gamma), float(C), mean_score, len(scores)))
            if best is None or mean_score > best[2]:
                best = (float(gamma), float(C), mean_score)

    if skipped:
        logger.warning("Skipped %d degenerate folds during grid search", skipped)
    if best is None:
        raise EmptyBatchError("every fold was degenerate; grid search has no score")
    logger.info("RBF grid search best gamma=%g C=%g score=%.4f", *best)
    return GridSearchResult(gamma=best[0], C=best[1], score=best[2], table=table, skipped_folds=skipped)
