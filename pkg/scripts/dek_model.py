"""
Deep Embedding Kernel architecture.

A shared-weight embedding network maps each sample of a pair to a high-level
representation, the combine layer forms dimension-wise products and absolute
differences (a symmetric function of the pair), and the kernel head maps that
vector to a single similarity value.

Model files are versioned JSON documents holding the architecture fields and
every layer matrix as row-major nested lists, plus an optional metadata block.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from config import DEFAULT_EMBEDDING_LAYERS, DEFAULT_KERNEL_LAYERS, MODEL_FORMAT, MODEL_FORMAT_VERSION
from scripts.errors import ModelFormatError, NonFiniteError, ShapeMismatchError
from scripts.gram_matrix import GramMatrix
from scripts.netcore import (
    Activation,
    ForwardTrace,
    LayerParams,
    MlpGrads,
    MlpParams,
    init_mlp,
    mlp_backward,
    mlp_forward,
    sgd_update,
)

logger = logging.getLogger(__name__)

# Pairs evaluated per vectorised block when filling a Gram matrix
GRAM_BLOCK_PAIRS = 65_536


class Task(str, Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


@dataclass(frozen=True)
class DekModel:
    """
    Trainable kernel: optional embedding network plus kernel head.

    ``embedding`` is None for the kernel-only variant, where the combine layer
    works directly on the raw inputs.
    """

    embedding: Optional[MlpParams]
    kernel: MlpParams
    width_factor: int
    input_dim: int
    task: Task

    def __post_init__(self) -> None:
        object.__setattr__(self, "task", Task(self.task))
        embedded_dim = self.input_dim
        if self.embedding is not None:
            if self.embedding.in_dim != self.input_dim:
                raise ShapeMismatchError(
                    f"embedding expects {self.embedding.in_dim} inputs, model input_dim is {self.input_dim}"
                )
            embedded_dim = self.embedding.out_dim
        if self.kernel.in_dim != 2 * embedded_dim:
            raise ShapeMismatchError(
                f"kernel head expects {self.kernel.in_dim} inputs, combine layer emits {2 * embedded_dim}"
            )
        if self.kernel.out_dim != 1:
            raise ShapeMismatchError("kernel head must have exactly one output unit")
        k = self.width_factor * self.input_dim
        if self.embedding is not None:
            for index, layer in enumerate(self.embedding.layers):
                if layer.weights.shape[0] != k:
                    raise ShapeMismatchError(f"embedding layer has {layer.weights.shape[0]} units, expected k={k}", layer=index)
        for index, layer in enumerate(self.kernel.layers[:-1]):
            if layer.weights.shape[0] != 2 * k:
                raise ShapeMismatchError(f"kernel hidden layer has {layer.weights.shape[0]} units, expected 2k={2 * k}", layer=index)
        expected_head = output_activation_for(self.task)
        if self.kernel.output_activation is not expected_head:
            raise ValueError(
                f"{self.task.value} model needs a {expected_head.value} head, got {self.kernel.output_activation.value}"
            )

    @property
    def embedding_width(self) -> int:
        """k = width_factor * input_dim."""
        return self.width_factor * self.input_dim

    @property
    def embedding_layers(self) -> int:
        return 0 if self.embedding is None else len(self.embedding.layers)

    @property
    def kernel_layers(self) -> int:
        """Hidden layers of the kernel head (the 1-unit output layer excluded)."""
        return len(self.kernel.layers) - 1

    def is_finite(self) -> bool:
        return self.kernel.is_finite() and (self.embedding is None or self.embedding.is_finite())

    def summary(self) -> dict:
        return {
            'input_dim': self.input_dim,
            'width_factor': self.width_factor,
            'embedding_width': self.embedding_width,
            'embedding_layers': self.embedding_layers,
            'kernel_layers': self.kernel_layers,
            'task': self.task.value,
        }


@dataclass(frozen=True)
class PairTrace:
    """Everything dek_backward needs from one (possibly batched) pair evaluation."""

    branch_i: Optional[ForwardTrace]
    branch_j: Optional[ForwardTrace]
    embedded_i: np.ndarray
    embedded_j: np.ndarray
    combined: np.ndarray
    head: ForwardTrace


@dataclass(frozen=True)
class DekGrads:
    embedding: Optional[MlpGrads]
    kernel: MlpGrads

    def is_finite(self) -> bool:
        return self.kernel.is_finite() and (self.embedding is None or self.embedding.is_finite())


def output_activation_for(task: Task | str) -> Activation:
    """Sigmoid head for classification, ReLU head for regression."""
    return Activation.SIGMOID if Task(task) is Task.CLASSIFICATION else Activation.RELU


def build_model(
    input_dim: int,
    task: Task | str = Task.CLASSIFICATION,
    width_factor: int = 1,
    embedding_layers: int = DEFAULT_EMBEDDING_LAYERS,
    kernel_layers: int = DEFAULT_KERNEL_LAYERS,
    hidden_activation: Activation | str = Activation.RELU,
    seed: int = 0,
) -> DekModel:
    """
    Construct a freshly initialised model obeying the width rule: every
    embedding layer has k = width_factor * input_dim units and every kernel
    hidden layer has 2k units.
    """
    if input_dim < 1 or width_factor < 1:
        raise ValueError("input_dim and width_factor must be positive")
    if embedding_layers < 0 or kernel_layers < 1:
        raise ValueError("embedding_layers must be >= 0 and kernel_layers >= 1")

    rng = np.random.default_rng(seed)
    k = width_factor * input_dim
    embedding = None
    embedded_dim = input_dim
    if embedding_layers:
        # ReLU on the embedding output layer too: embeddings are nonnegative
        embedding = init_mlp([input_dim] + [k] * embedding_layers, rng, hidden_activation, hidden_activation)
        embedded_dim = k
    kernel = init_mlp(
        [2 * embedded_dim] + [2 * k] * kernel_layers + [1], rng, hidden_activation, output_activation_for(task)
    )
    return DekModel(embedding=embedding, kernel=kernel, width_factor=width_factor, input_dim=input_dim, task=Task(task))


def combine(o_i: np.ndarray, o_j: np.ndarray) -> np.ndarray:
    """
    Symmetric pair representation: [o_i * o_j, |o_i - o_j|] along the last axis.
    Swapping the arguments yields the identical array.
    """
    o_i = np.asarray(o_i, dtype=np.float64)
    o_j = np.asarray(o_j, dtype=np.float64)
    if o_i.shape != o_j.shape:
        raise ShapeMismatchError(f"cannot combine shapes {o_i.shape} and {o_j.shape}")
    return np.concatenate([o_i * o_j, np.abs(o_i - o_j)], axis=-1)


def combine_backward(o_i: np.ndarray, o_j: np.ndarray, upstream_grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Chain rule through ``combine``. The absolute value uses subgradient 0 where
    o_i == o_j, which every self-pair hits.
    """
    o_i = np.asarray(o_i, dtype=np.float64)
    o_j = np.asarray(o_j, dtype=np.float64)
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    width = o_i.shape[-1]
    if o_i.shape != o_j.shape or upstream_grad.shape[-1] != 2 * width or upstream_grad.shape[:-1] != o_i.shape[:-1]:
        raise ShapeMismatchError(
            f"inconsistent shapes {o_i.shape}, {o_j.shape}, upstream {upstream_grad.shape}"
        )
    product_grad = upstream_grad[..., :width]
    difference_grad = upstream_grad[..., width:] * np.sign(o_i - o_j)
    return product_grad * o_j + difference_grad, product_grad * o_i - difference_grad


def _check_samples(model: DekModel, samples: np.ndarray, ndim: int) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != ndim or samples.shape[-1] != model.input_dim:
        raise ShapeMismatchError(f"expected samples of width {model.input_dim}, got shape {samples.shape}")
    if not np.all(np.isfinite(samples)):
        raise NonFiniteError("samples contain NaN or Inf")
    return samples


def _sample_set(model: DekModel, samples: np.ndarray) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        return np.empty((0, model.input_dim))
    return _check_samples(model, samples, 2)


def embed(model: DekModel, samples: np.ndarray) -> tuple[np.ndarray, Optional[ForwardTrace]]:
    """Embedding of one sample or a batch; identity for the kernel-only variant."""
    if model.embedding is None:
        return np.asarray(samples, dtype=np.float64), None
    trace = mlp_forward(model.embedding, samples)
    return trace.output, trace


def _pair_forward(model: DekModel, x_i: np.ndarray, x_j: np.ndarray) -> PairTrace:
    embedded_i, branch_i = embed(model, x_i)
    embedded_j, branch_j = embed(model, x_j)
    combined = combine(embedded_i, embedded_j)
    head = mlp_forward(model.kernel, combined)
    return PairTrace(branch_i, branch_j, embedded_i, embedded_j, combined, head)


def dek_forward(model: DekModel, x_i: np.ndarray, x_j: np.ndarray) -> tuple[float, PairTrace]:
    """
    Similarity of one pair.

    Returns:
        tuple: The similarity K(x_i, x_j) (in (0, 1) for classification,
        [0, inf) for regression) and the trace needed for backpropagation.
    """
    x_i = _check_samples(model, x_i, 1)
    x_j = _check_samples(model, x_j, 1)
    trace = _pair_forward(model, x_i, x_j)
    return float(trace.head.output[0]), trace


def dek_forward_batch(model: DekModel, x_i: np.ndarray, x_j: np.ndarray) -> tuple[np.ndarray, PairTrace]:
    """Similarities of aligned rows of ``x_i`` and ``x_j``."""
    x_i = _check_samples(model, x_i, 2)
    x_j = _check_samples(model, x_j, 2)
    if x_i.shape[0] != x_j.shape[0]:
        raise ShapeMismatchError(f"{x_i.shape[0]} left samples but {x_j.shape[0]} right samples")
    trace = _pair_forward(model, x_i, x_j)
    return trace.head.output[:, 0].copy(), trace


def dek_backward(model: DekModel, trace: PairTrace, dL_dK: float | np.ndarray) -> DekGrads:
    """
    Gradients of both component networks. The two branch contributions to the
    shared embedding parameters are summed; batched traces sum over pairs.
    """
    output = trace.head.output
    dL_dK = np.asarray(dL_dK, dtype=np.float64)
    expected = output.shape[0] if output.ndim == 2 else 1
    if dL_dK.size != expected:
        raise ShapeMismatchError(f"dL_dK has {dL_dK.size} entries for output of shape {output.shape}")

    kernel_grads, combined_grad = mlp_backward(model.kernel, trace.head, dL_dK.reshape(output.shape))
    grad_i, grad_j = combine_backward(trace.embedded_i, trace.embedded_j, combined_grad)
    if model.embedding is None:
        return DekGrads(embedding=None, kernel=kernel_grads)

    if trace.branch_i is None or trace.branch_j is None:
        raise ShapeMismatchError("trace has no embedding branches but the model has an embedding network")
    branch_i_grads, _ = mlp_backward(model.embedding, trace.branch_i, grad_i)
    branch_j_grads, _ = mlp_backward(model.embedding, trace.branch_j, grad_j)
    return DekGrads(embedding=branch_i_grads + branch_j_grads, kernel=kernel_grads)


def apply_update(model: DekModel, grads: DekGrads, learning_rate: float) -> DekModel:
    """Gradient-descent step on both component networks."""
    embedding = model.embedding
    if embedding is not None:
        embedding = sgd_update(embedding, grads.embedding, learning_rate)
    kernel = sgd_update(model.kernel, grads.kernel, learning_rate)
    return DekModel(embedding, kernel, model.width_factor, model.input_dim, model.task)


def gram(model: DekModel, x_a: np.ndarray, x_b: Optional[np.ndarray] = None) -> GramMatrix:
    """
    Kernel evaluations between two sample sets.

    When ``x_b`` is omitted or equal to ``x_a`` only the upper triangle is
    evaluated and mirrored, so the result is exactly symmetric.
    """
    x_a = _sample_set(model, x_a)
    x_b = x_a if x_b is None else _sample_set(model, x_b)
    symmetric = x_b.shape == x_a.shape and np.array_equal(x_b, x_a)

    n_a, n_b = x_a.shape[0], x_b.shape[0]
    values = np.zeros((n_a, n_b))
    if n_a == 0 or n_b == 0:
        return GramMatrix(values, symmetric_flag=symmetric)

    embedded_a, _ = embed(model, x_a)
    embedded_b = embedded_a if symmetric else embed(model, x_b)[0]

    if symmetric:
        rows, cols = np.triu_indices(n_a)
    else:
        rows, cols = np.divmod(np.arange(n_a * n_b), n_b)

    for start in range(0, rows.size, GRAM_BLOCK_PAIRS):
        block_rows = rows[start:start + GRAM_BLOCK_PAIRS]
        block_cols = cols[start:start + GRAM_BLOCK_PAIRS]
        head = mlp_forward(model.kernel, combine(embedded_a[block_rows], embedded_b[block_cols]))
        values[block_rows, block_cols] = head.output[:, 0]
        if symmetric:
            values[block_cols, block_rows] = head.output[:, 0]

    return GramMatrix(values, symmetric_flag=symmetric)


class _LayerRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    weights: list[list[float]]
    biases: list[float]


class _NetworkRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden_activation: Activation
    output_activation: Activation
    layers: list[_LayerRecord]


class ModelFileRecord(BaseModel):
    """On-disk schema of a model file."""

    model_config = ConfigDict(extra="forbid")

    format: str
    version: int
    input_dim: int
    width_factor: int
    task: Task
    embedding: Optional[_NetworkRecord]
    kernel: _NetworkRecord
    metadata: dict[str, Any] = {}

    @field_validator("format")
    @classmethod
    def _known_format(cls, value: str) -> str:
        if value != MODEL_FORMAT:
            raise ValueError(f"expected format {MODEL_FORMAT!r}, got {value!r}")
        return value


def _network_record(params: MlpParams) -> dict:
    return {
        'hidden_activation': params.hidden_activation.value,
        'output_activation': params.output_activation.value,
        'layers': [
            {'weights': layer.weights.tolist(), 'biases': layer.biases.tolist()}
            for layer in params.layers
        ],
    }


def _network_params(record: _NetworkRecord) -> MlpParams:
    layers = tuple(
        LayerParams(np.array(layer.weights, dtype=np.float64).reshape(len(layer.weights), -1), np.array(layer.biases, dtype=np.float64))
        for layer in record.layers
    )
    return MlpParams(layers, record.hidden_activation, record.output_activation)


def save_model(path: str | Path, model: DekModel, metadata: Optional[dict] = None) -> Path:
    """
    Write a model file. Floats are serialised with their shortest round-trip
    representation, so loading restores every value exactly.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        'format': MODEL_FORMAT,
        'version': MODEL_FORMAT_VERSION,
        'input_dim': model.input_dim,
        'width_factor': model.width_factor,
        'task': model.task.value,
        'embedding': None if model.embedding is None else _network_record(model.embedding),
        'kernel': _network_record(model.kernel),
        'metadata': metadata or {},
    }
    with path.open('w', encoding='utf-8') as f:
        json.dump(document, f)
    logger.info("Saved model to %s", path)
    return path


def load_model(path: str | Path) -> tuple[DekModel, dict]:
    """
    Read a model file.

    Returns:
        tuple: The model and its metadata block.

    Raises:
        ModelFormatError: If the file is missing, malformed or of another version.
    """
    path = Path(path)
    try:
        record = ModelFileRecord.model_validate_json(path.read_text(encoding='utf-8'))
    except FileNotFoundError as exc:
        raise ModelFormatError(f"model file not found: {path}") from exc
    except ValidationError as exc:
        raise ModelFormatError(f"invalid model file {path}: {exc.error_count()} schema errors") from exc

    if record.version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model file version {record.version} (expected {MODEL_FORMAT_VERSION})")

    try:
        model = DekModel(
            embedding=None if record.embedding is None else _network_params(record.embedding),
            kernel=_network_params(record.kernel),
            width_factor=record.width_factor,
            input_dim=record.input_dim,
            task=record.task,
        )
    except (ShapeMismatchError, ValueError) as exc:
        raise ModelFormatError(f"inconsistent model file {path}: {exc}") from exc
    return model, dict(record.metadata)
