"""
Soft-margin SVM over a precomputed kernel, trained with sequential minimal
optimization (Platt's SMO with the second-choice heuristic and a full error
vector).

The decision function is f(q) = sum_p dual_coefs[p] * K(q, support_p) + bias.
Two-class problems use a single machine (second class positive); three or more
classes use one-vs-rest with ties going to the lowest class index.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from config import DEFAULT_SVM_C, DEFAULT_SVM_MAX_PASSES, DEFAULT_SVM_TOL
from scripts.errors import InsufficientSamplesError, ShapeMismatchError
from scripts.gram_matrix import GramMatrix

logger = logging.getLogger(__name__)

# Smallest alpha change treated as progress
STEP_EPSILON = 1e-12


@dataclass(frozen=True)
class BinarySvm:
    """
    Attributes:
        dual_coefs: alpha_p * y_p for each support sample.
        support_indices: Training indices of the support samples.
        bias: Constant term of the decision function.
        C: Box constraint the machine was trained with.
        converged: False when the pass cap stopped the solver.
        passes: Outer passes used.
    """

    dual_coefs: np.ndarray
    support_indices: np.ndarray
    bias: float
    C: float
    converged: bool = True
    passes: int = 0


@dataclass(frozen=True)
class SvmModel:
    """One binary machine per class (or one for two classes)."""

    classes: tuple
    machines: tuple[BinarySvm, ...]


class _SmoSolver:
    """Mutable solver state for one binary problem."""

    def __init__(self, kernel: np.ndarray, labels: np.ndarray, C: float, tol: float, seed: int) -> None:
        self.kernel = kernel
        self.labels = labels
        self.C = C
        self.tol = tol
        self.n = labels.shape[0]
        self.alphas = np.zeros(self.n)
        self.bias = 0.0
        # errors[i] = f(x_i) - y_i
        self.errors = -labels.astype(np.float64)
        self.rng = np.random.default_rng(seed)

    def _bound(self, alpha: float) -> bool:
        return alpha <= 0.0 or alpha >= self.C

    def _pair_objective(self, i1: int, i2: int, a1: float, a2: float) -> float:
        """Part of the dual objective that depends on (alpha_i1, alpha_i2)."""
        K, y = self.kernel, self.labels
        old1, old2 = self.alphas[i1], self.alphas[i2]
        v1 = self.errors[i1] + y[i1] - self.bias - old1 * y[i1] * K[i1, i1] - old2 * y[i2] * K[i1, i2]
        v2 = self.errors[i2] + y[i2] - self.bias - old1 * y[i1] * K[i2, i1] - old2 * y[i2] * K[i2, i2]
        s = y[i1] * y[i2]
        return (a1 + a2 - 0.5 * K[i1, i1] * a1 * a1 - 0.5 * K[i2, i2] * a2 * a2 - s * K[i1, i2] * a1 * a2
                - y[i1] * a1 * v1 - y[i2] * a2 * v2)

    def take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        K, y, C = self.kernel, self.labels, self.C
        alpha1, alpha2 = self.alphas[i1], self.alphas[i2]
        y1, y2 = y[i1], y[i2]
        e1, e2 = self.errors[i1], self.errors[i2]
        s = y1 * y2

        if y1 != y2:
            low, high = max(0.0, alpha2 - alpha1), min(C, C + alpha2 - alpha1)
        else:
            low, high = max(0.0, alpha1 + alpha2 - C), min(C, alpha1 + alpha2)
        if high - low <= 0.0:
            return False

        eta = K[i1, i1] + K[i2, i2] - 2.0 * K[i1, i2]
        if eta > 0:
            a2 = min(max(alpha2 + y2 * (e1 - e2) / eta, low), high)
        else:
            # Non-positive curvature (possible for a learned kernel): pick the better end
            at_low = self._pair_objective(i1, i2, alpha1 + s * (alpha2 - low), low)
            at_high = self._pair_objective(i1, i2, alpha1 + s * (alpha2 - high), high)
            if at_low > at_high + STEP_EPSILON:
                a2 = low
            elif at_high > at_low + STEP_EPSILON:
                a2 = high
            else:
                a2 = alpha2

        if abs(a2 - alpha2) < STEP_EPSILON * (a2 + alpha2 + STEP_EPSILON):
            return False
        a1 = min(max(alpha1 + s * (alpha2 - a2), 0.0), C)

        delta1 = y1 * (a1 - alpha1)
        delta2 = y2 * (a2 - alpha2)
        b1 = self.bias - e1 - delta1 * K[i1, i1] - delta2 * K[i1, i2]
        b2 = self.bias - e2 - delta1 * K[i1, i2] - delta2 * K[i2, i2]
        if 0.0 < a1 < C:
            new_bias = b1
        elif 0.0 < a2 < C:
            new_bias = b2
        else:
            new_bias = (b1 + b2) / 2.0

        self.errors += delta1 * K[:, i1] + delta2 * K[:, i2] + (new_bias - self.bias)
        self.alphas[i1], self.alphas[i2] = a1, a2
        self.bias = new_bias
        return True

    def kkt_violated(self, i: int) -> bool:
        r = self.errors[i] * self.labels[i]
        return (r < -self.tol and self.alphas[i] < self.C) or (r > self.tol and self.alphas[i] > 0.0)

    def examine(self, i2: int) -> int:
        if not self.kkt_violated(i2):
            return 0

        free = np.flatnonzero((self.alphas > 0.0) & (self.alphas < self.C))
        if free.size > 1:
            i1 = int(free[np.argmax(np.abs(self.errors[free] - self.errors[i2]))])
            if self.take_step(i1, i2):
                return 1
        if free.size:
            for i1 in np.roll(free, -int(self.rng.integers(free.size))):
                if self.take_step(int(i1), i2):
                    return 1
        for i1 in np.roll(np.arange(self.n), -int(self.rng.integers(self.n))):
            if self.take_step(int(i1), i2):
                return 1
        return 0

    def run(self, max_passes: int) -> tuple[bool, int]:
        examine_all = True
        changed = 0
        passes = 0
        while changed > 0 or examine_all:
            if passes >= max_passes:
                return False, passes
            if examine_all:
                candidates = range(self.n)
            else:
                candidates = np.flatnonzero((self.alphas > 0.0) & (self.alphas < self.C)).tolist()
            changed = sum(self.examine(i) for i in candidates)
            passes += 1
            if examine_all:
                examine_all = False
            elif changed == 0:
                examine_all = True
        return True, passes


def dual_objective(alphas: np.ndarray, labels: np.ndarray, kernel: np.ndarray) -> float:
    """sum(alpha) - 1/2 sum_pq alpha_p alpha_q y_p y_q K_pq."""
    weighted = alphas * labels
    return float(alphas.sum() - 0.5 * weighted @ kernel @ weighted)


def smo_train(
    gram: GramMatrix,
    labels: Sequence[int],
    C: float = DEFAULT_SVM_C,
    tol: float = DEFAULT_SVM_TOL,
    max_passes: int = DEFAULT_SVM_MAX_PASSES,
    seed: int = 0,
) -> BinarySvm:
    """
    Train a binary SVM on a symmetric training Gram matrix with labels in {-1, +1}.

    A run that hits ``max_passes`` returns its last iterate with
    ``converged=False``.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if not gram.symmetric_flag:
        raise ShapeMismatchError("SMO needs a symmetric training Gram matrix")
    if labels.shape[0] != gram.shape[0]:
        raise ShapeMismatchError(f"Gram has {gram.shape[0]} rows but {labels.shape[0]} labels were given")
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ValueError("binary labels must be -1 or +1")
    if not (np.any(labels > 0) and np.any(labels < 0)):
        raise InsufficientSamplesError("SMO needs both classes present")
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")

    solver = _SmoSolver(gram.values, labels, C, tol, seed)
    converged, passes = solver.run(max_passes)
    if not converged:
        logger.warning("SMO stopped at the %d-pass cap before meeting tolerance %.1e", max_passes, tol)

    support = np.flatnonzero(solver.alphas > 0.0)
    return BinarySvm(
        dual_coefs=solver.alphas[support] * labels[support],
        support_indices=support,
        bias=solver.bias,
        C=C,
        converged=converged,
        passes=passes,
    )


def svm_decision_function(machine: BinarySvm, cross_gram: GramMatrix) -> np.ndarray:
    """Decision values for each query row of a (queries x training) Gram matrix."""
    if machine.support_indices.size and machine.support_indices.max() >= cross_gram.shape[1]:
        raise ShapeMismatchError(
            f"cross Gram has {cross_gram.shape[1]} columns but a support index is {machine.support_indices.max()}"
        )
    return cross_gram.values[:, machine.support_indices] @ machine.dual_coefs + machine.bias


def svm_fit(
    gram: GramMatrix,
    labels: Sequence,
    C: float = DEFAULT_SVM_C,
    tol: float = DEFAULT_SVM_TOL,
    max_passes: int = DEFAULT_SVM_MAX_PASSES,
    seed: int = 0,
) -> SvmModel:
    """Fit a binary machine (two classes) or one-vs-rest machines (more)."""
    labels = np.asarray(labels)
    classes = tuple(np.unique(labels).tolist())
    if len(classes) < 2:
        raise InsufficientSamplesError("an SVM needs at least two classes")
    heads = classes[1:] if len(classes) == 2 else classes
    machines = tuple(
        smo_train(gram, np.where(labels == positive, 1, -1), C, tol, max_passes, seed)
        for positive in heads
    )
    return SvmModel(classes=classes, machines=machines)


def svm_predict(model: SvmModel | BinarySvm, cross_gram: GramMatrix) -> np.ndarray:
    """
    Labels for each query row. A BinarySvm predicts +1 where the decision value
    is >= 0 and -1 elsewhere.
    """
    if isinstance(model, BinarySvm):
        return np.where(svm_decision_function(model, cross_gram) >= 0.0, 1, -1)
    if len(model.machines) == 1:
        decision = svm_decision_function(model.machines[0], cross_gram)
        return np.where(decision >= 0.0, model.classes[1], model.classes[0])
    decisions = np.column_stack([svm_decision_function(machine, cross_gram) for machine in model.machines])
    return np.asarray(model.classes)[np.argmax(decisions, axis=1)]
