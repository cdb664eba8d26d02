"""
Training loop for DEK models.

Plain mini-batch gradient descent over training pairs. Pairs are shuffled
each epoch with a generator seeded from the config; with local pairing the
pair list is regenerated every ``pairing_interval`` iterations, starting at
the first iteration.
"""
from __future__ import annotations

import logging
from typing import Callable, Literal, NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt

from config import DEFAULT_PAIRING_INTERVAL
from scripts.dek_model import DekModel, Task, apply_update, dek_backward, dek_forward_batch
from scripts.DataManager import Dataset
from scripts.errors import ConfigError, EmptyBatchError, NonFiniteError, TaskMismatchError, TrainingDivergedError
from scripts.losses import classification_loss, classification_loss_grad, regression_loss, regression_loss_grad
from scripts.pairing import PairBatch, make_pairs_full, make_pairs_local, make_regression_pairs

logger = logging.getLogger(__name__)

ProgressSink = Callable[[int, float], None]


class TrainConfig(BaseModel):
    """Hyperparameters of one training run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float = Field(0.1, ge=0.0)
    epochs: PositiveInt = 200
    batch_size: PositiveInt = 64
    pairing: Literal["full", "local"] = "full"
    # pairing_interval, recall_level and max_pairs_per_reference only apply to local pairing
    pairing_interval: PositiveInt = DEFAULT_PAIRING_INTERVAL
    recall_level: float = Field(0.1, gt=0.0, le=1.0)
    max_pairs_per_reference: Optional[PositiveInt] = None
    gamma: PositiveFloat = 1.0
    seed: int = 0


class TrainResult(NamedTuple):
    model: DekModel
    history: list[float]


def initial_pairs(model: DekModel, data: Dataset, config: TrainConfig) -> PairBatch:
    """The pair list the first training iteration uses."""
    if data.task is Task.REGRESSION:
        if config.pairing == "local":
            raise ConfigError("local pairing is only defined for classification data")
        return make_regression_pairs(data.target, config.gamma)
    if config.pairing == "local":
        return make_pairs_local(model, data.features, data.target, config.recall_level, config.max_pairs_per_reference)
    return make_pairs_full(data.target)


def _require_pairs(batch: PairBatch) -> PairBatch:
    if len(batch) == 0:
        raise EmptyBatchError("pairing produced no training pairs")
    return batch


def train(
    model: DekModel,
    data: Dataset,
    config: TrainConfig,
    progress: Optional[ProgressSink] = None,
) -> TrainResult:
    """
    Fit ``model`` to ``data``.

    Args:
        model: Initial model; its task must match the dataset's.
        data: Training split.
        config: Hyperparameters; all randomness derives from ``config.seed``.
        progress: Called as ``progress(epoch, mean_loss)`` after every epoch.

    Returns:
        TrainResult: The trained model and the per-epoch mean loss history.

    Raises:
        TaskMismatchError: Model and dataset tasks differ.
        TrainingDivergedError: Loss or gradients became non-finite; carries the
            last finite model.
    """
    if model.task is not data.task:
        raise TaskMismatchError(f"model task {model.task.value} does not match dataset task {data.task.value}")
    if model.input_dim != data.features.shape[1]:
        raise TaskMismatchError(f"model expects {model.input_dim} features, dataset has {data.features.shape[1]}")

    classification = data.task is Task.CLASSIFICATION
    loss_fn = classification_loss if classification else regression_loss
    loss_grad = classification_loss_grad if classification else regression_loss_grad
    local = classification and config.pairing == "local"

    rng = np.random.default_rng(config.seed)
    features = data.features
    batch = _require_pairs(initial_pairs(model, data, config))
    history: list[float] = []
    iteration = 0
    logger.info(
        "Training on %d samples, %d %s pairs, %d epochs", features.shape[0], len(batch), config.pairing, config.epochs
    )

    for epoch in range(config.epochs):
        order = rng.permutation(len(batch))
        cursor = 0
        loss_sum = 0.0
        pair_count = 0
        while cursor < len(batch):
            if local and iteration > 0 and iteration % config.pairing_interval == 0:
                batch = make_pairs_local(
                    model, features, data.target, config.recall_level, config.max_pairs_per_reference
                )
                _require_pairs(batch)
                order = rng.permutation(len(batch))
                if cursor >= len(batch):
                    break

            selected = order[cursor:cursor + config.batch_size]
            cursor += config.batch_size
            pairs = batch.pairs[selected]
            targets = batch.targets[selected]

            try:
                similarities, trace = dek_forward_batch(model, features[pairs[:, 0]], features[pairs[:, 1]])
                loss = loss_fn(similarities, targets)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at iteration {iteration + 1}", model=model, history=history
                    )
                grads = dek_backward(model, trace, loss_grad(similarities, targets))
                updated = apply_update(model, grads, config.learning_rate)
                if not updated.is_finite():
                    raise NonFiniteError("update produced non-finite parameters")
                model = updated
            except NonFiniteError as exc:
                raise TrainingDivergedError(
                    f"training diverged at iteration {iteration + 1}: {exc}", model=model, history=history
                ) from exc

            loss_sum += loss * len(selected)
            pair_count += len(selected)
            iteration += 1

        mean_loss = loss_sum / pair_count
        history.append(mean_loss)
        logger.debug("epoch %d mean loss %.6f", epoch + 1, mean_loss)
        if progress is not None:
            progress(epoch + 1, mean_loss)

    logger.info("Finished training after %d iterations, final loss %.6f", iteration, history[-1])
    return TrainResult(model, history)
