"""
Kernel PCA over a precomputed Gram matrix.

A learned kernel need not be positive semidefinite, so negative eigenvalues of
the centered matrix are clamped to zero and their components are never
selected.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from scripts.errors import ConfigError, NoVarianceError, ShapeMismatchError
from scripts.gram_matrix import GramMatrix

# Eigenvalues at or below this fraction of the largest count as zero
EIGENVALUE_RTOL = 1e-10


@dataclass(frozen=True)
class KpcaModel:
    training_gram: GramMatrix
    eigenvalues: np.ndarray
    scaled_eigenvectors: np.ndarray
    n_components: int
    column_means: np.ndarray
    total_mean: float
    training_coordinates: np.ndarray


def center_cross_gram(values: np.ndarray, column_means: np.ndarray, total_mean: float) -> np.ndarray:
    """Center query rows against training statistics."""
    return values - column_means[np.newaxis, :] - values.mean(axis=1, keepdims=True) + total_mean


def kpca_fit(gram: GramMatrix, n_components: int) -> KpcaModel:
    """
    Double-center the training Gram matrix, eigendecompose it and keep the
    ``n_components`` largest positive components.

    Raises:
        NoVarianceError: If the centered matrix has no positive eigenvalue.
        ValueError: If fewer positive components exist than requested.
    """
    if not gram.symmetric_flag:
        raise ShapeMismatchError("kPCA needs a symmetric training Gram matrix")
    n = gram.shape[0]
    if not 1 <= n_components <= n:
        raise ConfigError(f"n_components must lie in [1, {n}], got {n_components}")

    values = gram.values
    column_means = values.mean(axis=0)
    total_mean = float(values.mean())
    centered = center_cross_gram(values, column_means, total_mean)
    centered = (centered + centered.T) / 2.0

    eigenvalues, eigenvectors = eigh(centered)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    eigenvectors = eigenvectors[:, order]

    threshold = EIGENVALUE_RTOL * max(float(eigenvalues[0]), 1.0)
    positive = int(np.sum(eigenvalues > threshold))
    if positive == 0:
        raise NoVarianceError("centered kernel has no positive eigenvalue; it carries no variance")
    if n_components > positive:
        raise ConfigError(f"only {positive} positive components available, {n_components} requested")

    kept_values = eigenvalues[:n_components]
    scaled = eigenvectors[:, :n_components] / np.sqrt(kept_values)
    return KpcaModel(
        training_gram=gram,
        eigenvalues=kept_values,
        scaled_eigenvectors=scaled,
        n_components=n_components,
        column_means=column_means,
        total_mean=total_mean,
        training_coordinates=centered @ scaled,
    )


def kpca_project(model: KpcaModel, cross_gram: GramMatrix) -> np.ndarray:
    """Coordinates (queries x n_components) of a (queries x training) Gram matrix."""
    if cross_gram.shape[1] != model.training_gram.shape[0]:
        raise ShapeMismatchError(
            f"cross Gram has {cross_gram.shape[1]} columns, training set has {model.training_gram.shape[0]} samples"
        )
    centered = center_cross_gram(cross_gram.values, model.column_means, model.total_mean)
    return centered @ model.scaled_eigenvectors
