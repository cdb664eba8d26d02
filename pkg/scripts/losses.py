"""
Training objectives.

Both objectives are mean-reduced over the batch so the learning rate does not
depend on the batch size. The ``*_grad`` functions return dL/dK per pair for
that mean-reduced loss.
"""
import numpy as np

from config import LOG_EPSILON
from scripts.errors import EmptyBatchError, ShapeMismatchError


def _aligned(similarities, targets) -> tuple[np.ndarray, np.ndarray]:
    similarities = np.asarray(similarities, dtype=np.float64).ravel()
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if similarities.size == 0:
        raise EmptyBatchError("loss of an empty batch is undefined")
    if similarities.shape != targets.shape:
        raise ShapeMismatchError(f"{similarities.size} similarities but {targets.size} targets")
    return similarities, targets


def classification_loss(similarities, targets) -> float:
    """
    Mean binary cross-entropy -[Y log K + (1-Y) log(1-K)], with K clamped into
    [eps, 1-eps] so saturated outputs stay finite.
    """
    similarities, targets = _aligned(similarities, targets)
    clamped = np.clip(similarities, LOG_EPSILON, 1.0 - LOG_EPSILON)
    losses = -(targets * np.log(clamped) + (1.0 - targets) * np.log1p(-clamped))
    return float(losses.mean())


def classification_loss_grad(similarities, targets) -> np.ndarray:
    """(K - Y) / (K (1 - K)) / N on the clamped similarities."""
    similarities, targets = _aligned(similarities, targets)
    clamped = np.clip(similarities, LOG_EPSILON, 1.0 - LOG_EPSILON)
    return (clamped - targets) / (clamped * (1.0 - clamped)) / similarities.size


def regression_target(y_i, y_j, gamma: float):
    """
    Kernel target exp(-gamma |y_i - y_j|) for a pair of continuous targets.
    Huge gaps are floored at the smallest positive float so targets stay in (0, 1].
    Returns a float for scalar inputs and an array otherwise.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    target = np.exp(-gamma * np.abs(np.asarray(y_i, dtype=np.float64) - np.asarray(y_j, dtype=np.float64)))
    target = np.maximum(target, np.finfo(np.float64).tiny)
    return float(target) if np.ndim(target) == 0 else target


def regression_loss(similarities, targets) -> float:
    """Mean squared difference between predicted and target kernel values."""
    similarities, targets = _aligned(similarities, targets)
    return float(np.mean((similarities - targets) ** 2))


def regression_loss_grad(similarities, targets) -> np.ndarray:
    similarities, targets = _aligned(similarities, targets)
    return 2.0 * (similarities - targets) / similarities.size
