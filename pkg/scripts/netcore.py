"""
Dense feed-forward network engine used by both DEK component networks.

Parameters, traces and gradients are immutable values. Every function accepts
either a single sample (1-D input) or a batch of samples stacked as rows
(2-D input); batched gradients are summed over the rows in row order.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import expit

from scripts.errors import NonFiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)


class Activation(str, Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    IDENTITY = "identity"


def activate(kind: Activation | str, z: np.ndarray) -> np.ndarray:
    """
    Apply an activation elementwise.

    Args:
        kind: One of relu, sigmoid, tanh, identity.
        z: Pre-activation values.

    Returns:
        np.ndarray: Activated values with the shape of ``z``.

    Raises:
        NonFiniteError: If ``z`` contains NaN or Inf.
    """
    kind = Activation(kind)
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NonFiniteError(f"{kind.value} received non-finite input")

    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.SIGMOID:
        return expit(z)
    if kind is Activation.TANH:
        return np.tanh(z)
    return z.copy()


def activation_derivative(kind: Activation | str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Derivative of the activation at ``z`` given its output ``a``."""
    kind = Activation(kind)
    if kind is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    if kind is Activation.SIGMOID:
        return a * (1.0 - a)
    if kind is Activation.TANH:
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass(frozen=True)
class LayerParams:
    """Weights (out_dim x in_dim) and biases (out_dim) of one affine layer."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self) -> None:
        weights = np.asarray(self.weights, dtype=np.float64)
        biases = np.asarray(self.biases, dtype=np.float64)
        if weights.ndim != 2 or biases.ndim != 1:
            raise ShapeMismatchError("weights must be 2-D and biases 1-D")
        if weights.shape[0] != biases.shape[0]:
            raise ShapeMismatchError(
                f"weights have {weights.shape[0]} rows but biases have {biases.shape[0]} entries"
            )
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class MlpParams:
    """An ordered, dimension-chained stack of layers plus activation policy."""

    layers: tuple[LayerParams, ...]
    hidden_activation: Activation = Activation.RELU
    output_activation: Activation = Activation.IDENTITY

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ShapeMismatchError("an MLP needs at least one layer")
        for index in range(1, len(layers)):
            if layers[index - 1].out_dim != layers[index].in_dim:
                raise ShapeMismatchError(
                    f"expects {layers[index].in_dim} inputs but previous layer emits {layers[index - 1].out_dim}",
                    layer=index,
                )
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "hidden_activation", Activation(self.hidden_activation))
        object.__setattr__(self, "output_activation", Activation(self.output_activation))

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def activation_for(self, index: int) -> Activation:
        return self.output_activation if index == len(self.layers) - 1 else self.hidden_activation

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.biases)) for layer in self.layers)


@dataclass(frozen=True)
class ForwardTrace:
    """Input, per-layer pre-activations and activations of one forward pass."""

    inputs: np.ndarray
    pre_activations: tuple[np.ndarray, ...]
    activations: tuple[np.ndarray, ...]

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


@dataclass(frozen=True)
class MlpGrads:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __add__(self, other: "MlpGrads") -> "MlpGrads":
        return MlpGrads(
            weights=tuple(a + b for a, b in zip(self.weights, other.weights)),
            biases=tuple(a + b for a, b in zip(self.biases, other.biases)),
        )

    def scaled(self, factor: float) -> "MlpGrads":
        return MlpGrads(
            weights=tuple(w * factor for w in self.weights),
            biases=tuple(b * factor for b in self.biases),
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in (*self.weights, *self.biases))

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "MlpGrads":
        return cls(
            weights=tuple(np.zeros_like(layer.weights) for layer in params.layers),
            biases=tuple(np.zeros_like(layer.biases) for layer in params.layers),
        )


def init_mlp(
    layer_sizes: Sequence[int],
    rng: np.random.Generator,
    hidden_activation: Activation | str = Activation.RELU,
    output_activation: Activation | str = Activation.IDENTITY,
) -> MlpParams:
    """
    Build an MLP with Glorot-uniform weights and zero biases.

    Args:
        layer_sizes: Input width followed by each layer's output width.
        rng: Seeded generator; identical seeds give identical networks.
    """
    if len(layer_sizes) < 2:
        raise ShapeMismatchError("layer_sizes needs an input width and at least one layer width")

    layers = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(LayerParams(
            weights=rng.uniform(-limit, limit, size=(fan_out, fan_in)),
            biases=np.zeros(fan_out),
        ))
    return MlpParams(tuple(layers), Activation(hidden_activation), Activation(output_activation))


def mlp_forward(params: MlpParams, inputs: np.ndarray) -> ForwardTrace:
    """
    Run the network on one sample or a batch of row samples.

    Raises:
        ShapeMismatchError: If the input width differs from the first layer's.
        NonFiniteError: If the input contains NaN or Inf.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim not in (1, 2) or inputs.shape[-1] != params.in_dim:
        raise ShapeMismatchError(
            f"expects input width {params.in_dim}, got shape {inputs.shape}", layer=0
        )

    hidden = inputs
    pre_activations = []
    activations = []
    for index, layer in enumerate(params.layers):
        z = hidden @ layer.weights.T + layer.biases
        hidden = activate(params.activation_for(index), z)
        pre_activations.append(z)
        activations.append(hidden)

    return ForwardTrace(inputs=inputs, pre_activations=tuple(pre_activations), activations=tuple(activations))


def mlp_backward(params: MlpParams, trace: ForwardTrace, output_grad: np.ndarray) -> tuple[MlpGrads, np.ndarray]:
    """
    Backpropagate ``output_grad`` (dL/d output) through the network.

    Returns:
        tuple: Gradients of every weight and bias, and dL/d input with the
        shape of the traced input. Batched traces sum parameter gradients
        over rows.
    """
    if len(trace.activations) != len(params.layers):
        raise ShapeMismatchError(
            f"trace has {len(trace.activations)} layers but params have {len(params.layers)}"
        )
    output_grad = np.asarray(output_grad, dtype=np.float64)
    if output_grad.shape != trace.output.shape:
        raise ShapeMismatchError(
            f"output gradient shape {output_grad.shape} does not match output {trace.output.shape}",
            layer=len(params.layers) - 1,
        )

    weight_grads: list[np.ndarray] = [None] * len(params.layers)
    bias_grads: list[np.ndarray] = [None] * len(params.layers)
    batched = trace.inputs.ndim == 2

    grad = output_grad
    for index in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[index]
        z = trace.pre_activations[index]
        if z.shape[-1] != layer.out_dim:
            raise ShapeMismatchError("trace does not belong to these params", layer=index)
        delta = grad * activation_derivative(params.activation_for(index), z, trace.activations[index])
        previous = trace.activations[index - 1] if index > 0 else trace.inputs
        if batched:
            weight_grads[index] = delta.T @ previous
            bias_grads[index] = delta.sum(axis=0)
        else:
            weight_grads[index] = np.outer(delta, previous)
            bias_grads[index] = delta.copy()
        grad = delta @ layer.weights

    return MlpGrads(weights=tuple(weight_grads), biases=tuple(bias_grads)), grad


def sgd_update(params: MlpParams, grads: MlpGrads, learning_rate: float) -> MlpParams:
    """
    Plain gradient-descent step: p <- p - learning_rate * grad(p).

    Raises:
        NonFiniteError: If any gradient entry is NaN or Inf; params are not touched.
        NonFiniteError: If the step itself overflows to NaN or Inf.
    """
    if learning_rate < 0 or not np.isfinite(learning_rate):
        raise ValueError(f"learning_rate must be finite and >= 0, got {learning_rate}")
    if len(grads.weights) != len(params.layers):
        raise ShapeMismatchError("gradient layer count does not match params")
    if not grads.is_finite():
        raise NonFiniteError("non-finite gradient; training step aborted")

    layers = []
    for index, (layer, grad_w, grad_b) in enumerate(zip(params.layers, grads.weights, grads.biases)):
        if grad_w.shape != layer.weights.shape or grad_b.shape != layer.biases.shape:
            raise ShapeMismatchError("gradient shape does not match params", layer=index)
        layers.append(LayerParams(
            weights=layer.weights - learning_rate * grad_w,
            biases=layer.biases - learning_rate * grad_b,
        ))
    updated = MlpParams(tuple(layers), params.hidden_activation, params.output_activation)
    if not updated.is_finite():
        raise NonFiniteError("update overflowed to non-finite parameters; step discarded")
    return updated
