"""
Off-the-shelf comparison models: gradient-boosted trees, a random forest and a
multilayer perceptron, fitted on the training split with library defaults and
scored on the test split (accuracy for classification, R^2 for regression).
"""
from __future__ import annotations

import logging
import warnings
from typing import Sequence

from sklearn.ensemble import (
    GradientBoostingClassifier,
    GradientBoostingRegressor,
    RandomForestClassifier,
    RandomForestRegressor,
)
from sklearn.exceptions import ConvergenceWarning
from sklearn.neural_network import MLPClassifier, MLPRegressor

from scripts.DataManager import Dataset
from scripts.dek_model import Task
from scripts.errors import ConfigError, TaskMismatchError
from scripts.metrics import metric_accuracy, metric_r2

logger = logging.getLogger(__name__)

MODEL_KINDS = ('gb', 'rf', 'mlp')

_ESTIMATORS = {
    ('gb', Task.CLASSIFICATION): GradientBoostingClassifier,
    ('gb', Task.REGRESSION): GradientBoostingRegressor,
    ('rf', Task.CLASSIFICATION): RandomForestClassifier,
    ('rf', Task.REGRESSION): RandomForestRegressor,
    ('mlp', Task.CLASSIFICATION): MLPClassifier,
    ('mlp', Task.REGRESSION): MLPRegressor,
}


def make_estimator(kind: str, task: Task | str, seed: int = 0):
    """Unfitted scikit-learn estimator for ``kind`` and ``task``."""
    try:
        estimator_class = _ESTIMATORS[(kind, Task(task))]
    except KeyError as exc:
        raise ConfigError(f"unknown baseline model {kind!r}; choose from {', '.join(MODEL_KINDS)}") from exc
    if kind == 'mlp':
        return estimator_class(max_iter=1000, random_state=seed)
    return estimator_class(random_state=seed)


def fit_baselines(train: Dataset, test: Dataset, kinds: Sequence[str] = MODEL_KINDS, seed: int = 0) -> dict[str, float]:
    """
    Fit each requested model on ``train`` and score it on ``test``.

    Returns:
        dict: ``{kind: score}`` in the order requested.

    Raises:
        TaskMismatchError: If the two splits disagree on the task.
        ConfigError: If a kind is unknown or none is requested.
    """
    if train.task is not test.task:
        raise TaskMismatchError(f"train split is {train.task.value} but test split is {test.task.value}")
    if not kinds:
        raise ConfigError("no baseline models requested")

    scores = {}
    for kind in kinds:
        estimator = make_estimator(kind, train.task, seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            estimator.fit(train.features, train.target)
        predictions = estimator.predict(test.features)
        if train.task is Task.CLASSIFICATION:
            scores[kind] = metric_accuracy(predictions, test.target)
        else:
            scores[kind] = metric_r2(predictions, test.target)
        logger.info("Baseline %s scored %.4f", kind, scores[kind])
    return scores
