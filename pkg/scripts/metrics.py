"""Evaluation metrics."""
import numpy as np
from sklearn.metrics import accuracy_score, r2_score, silhouette_score

from scripts.errors import DegenerateTargetError, EmptyBatchError, ShapeMismatchError


def _aligned(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if truth.size == 0:
        raise EmptyBatchError("metrics need at least one prediction")
    if pred.shape != truth.shape:
        raise ShapeMismatchError(f"{pred.shape} predictions for {truth.shape} truths")
    return pred, truth


def metric_accuracy(pred, truth) -> float:
    """Fraction of predictions equal to the truth."""
    pred, truth = _aligned(pred, truth)
    return float(accuracy_score(truth, pred))


def metric_r2(pred, truth) -> float:
    """
    Coefficient of determination 1 - SS_res / SS_tot.

    Raises:
        DegenerateTargetError: If the truth is constant (SS_tot = 0).
    """
    pred, truth = _aligned(pred, truth)
    truth = truth.astype(np.float64)
    if np.all(truth == truth[0]):
        raise DegenerateTargetError("R^2 is undefined for a constant truth")
    return float(r2_score(truth, pred.astype(np.float64)))


def metric_silhouette(coordinates, labels) -> float:
    """Mean silhouette of labelled points in a projected space."""
    coordinates = np.asarray(coordinates, dtype=np.float64)
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        raise DegenerateTargetError("silhouette needs at least two classes")
    return float(silhouette_score(coordinates, labels))
