"""
Tests for the SMO-trained kernel SVM.
"""

import logging

import numpy as np
import pytest
from sklearn.svm import SVC

from scripts.errors import InsufficientSamplesError, ShapeMismatchError
from scripts.gram_matrix import GramMatrix
from scripts.rbf_baseline import rbf_kernel
from scripts.svm import BinarySvm, dual_objective, smo_train, svm_decision_function, svm_fit, svm_predict


def _full_alphas(machine: BinarySvm, labels: np.ndarray) -> np.ndarray:
    alphas = np.zeros(labels.shape[0])
    alphas[machine.support_indices] = machine.dual_coefs * labels[machine.support_indices]
    return alphas


def _overlapping_problem(rng, n_per_class=15):
    features = np.vstack([
        rng.normal(loc=(-1.0, 0.0), scale=0.9, size=(n_per_class, 2)),
        rng.normal(loc=(1.0, 0.0), scale=0.9, size=(n_per_class, 2)),
    ])
    labels = np.repeat([-1.0, 1.0], n_per_class)
    return features, labels


def test_two_point_problem():
    # linear kernel x * x' plus one keeps Gram entries non-negative; the shift cancels
    # in the dual and the decision values because sum(alpha * y) = 0
    points = np.array([-1.0, 1.0])
    gram = GramMatrix(np.outer(points, points) + 1.0, symmetric_flag=True)
    machine = smo_train(gram, [-1, 1], C=10.0, tol=1e-9)
    assert _full_alphas(machine, np.array([-1.0, 1.0])) == pytest.approx([0.5, 0.5])
    assert machine.bias == pytest.approx(0.0, abs=1e-12)

    queries = np.linspace(-1.0, 1.0, 9)
    cross = GramMatrix(np.outer(queries, points) + 1.0)
    assert np.allclose(svm_decision_function(machine, cross), queries)


def test_dual_optimum_matches_libsvm(rng):
    for _ in range(3):
        features, labels = _overlapping_problem(rng)
        gram = rbf_kernel(features, gamma=0.5)
        machine = smo_train(gram, labels, C=1.0, tol=1e-6)
        assert machine.converged

        reference = SVC(kernel="precomputed", C=1.0, tol=1e-8).fit(gram.values, labels)
        reference_alphas = np.zeros(labels.shape[0])
        reference_alphas[reference.support_] = np.abs(reference.dual_coef_[0])

        ours = dual_objective(_full_alphas(machine, labels), labels, gram.values)
        theirs = dual_objective(reference_alphas, labels, gram.values)
        assert ours == pytest.approx(theirs, abs=1e-4)


def test_solution_satisfies_kkt_conditions(rng):
    features, labels = _overlapping_problem(rng, n_per_class=12)
    gram = rbf_kernel(features, gamma=0.5)
    C = 2.0
    machine = smo_train(gram, labels, C=C, tol=1e-6)
    alphas = _full_alphas(machine, labels)

    assert np.all((alphas >= 0.0) & (alphas <= C))
    assert abs(float(alphas @ labels)) < 1e-8

    margins = labels * svm_decision_function(machine, gram) - 1.0
    at_zero = alphas < 1e-8
    at_bound = alphas > C - 1e-8
    free = ~(at_zero | at_bound)
    assert np.all(margins[at_zero] >= -1e-3)
    assert np.all(margins[at_bound] <= 1e-3)
    assert np.all(np.abs(margins[free]) <= 1e-3)


def test_flipping_labels_flips_the_decision(rng):
    features, labels = _overlapping_problem(rng, n_per_class=10)
    gram = rbf_kernel(features, gamma=0.5)
    queries = rbf_kernel(rng.normal(size=(6, 2)), features, gamma=0.5)
    forward = svm_decision_function(smo_train(gram, labels, seed=3), queries)
    flipped = svm_decision_function(smo_train(gram, -labels, seed=3), queries)
    assert np.allclose(forward, -flipped, atol=1e-6)


def test_duplicated_training_set_keeps_the_hard_margin_solution(rng):
    features = np.vstack([
        rng.normal(loc=(-3.0, 0.0), scale=0.3, size=(5, 2)),
        rng.normal(loc=(3.0, 0.0), scale=0.3, size=(5, 2)),
    ])
    labels = np.repeat([-1.0, 1.0], 5)
    queries = rng.uniform(-3.0, 3.0, size=(8, 2))

    single = smo_train(rbf_kernel(features, gamma=0.5), labels, C=100.0, tol=1e-8)
    doubled_features = np.vstack([features, features])
    doubled = smo_train(rbf_kernel(doubled_features, gamma=0.5), np.concatenate([labels, labels]), C=100.0, tol=1e-8)

    assert np.allclose(
        svm_decision_function(single, rbf_kernel(queries, features, gamma=0.5)),
        svm_decision_function(doubled, rbf_kernel(queries, doubled_features, gamma=0.5)),
        atol=1e-5,
    )


def test_machine_without_support_predicts_the_sign_of_its_bias():
    empty = BinarySvm(dual_coefs=np.array([]), support_indices=np.array([], dtype=np.int64), bias=-0.3, C=1.0)
    assert svm_predict(empty, GramMatrix(np.ones((3, 4)))).tolist() == [-1, -1, -1]


def test_pass_cap_returns_unconverged_iterate(rng, caplog):
    caplog.set_level(logging.WARNING)
    features, labels = _overlapping_problem(rng)
    machine = smo_train(rbf_kernel(features, gamma=0.5), labels, tol=1e-9, max_passes=1)
    assert not machine.converged
    assert machine.passes == 1
    assert "pass cap" in caplog.text


def test_two_class_labels_keep_their_names(blobs):
    gram = rbf_kernel(blobs.features, gamma=0.5)
    names = np.asarray(blobs.label_names)[blobs.target]
    model = svm_fit(gram, names)
    assert model.classes == ("a", "b")
    assert len(model.machines) == 1
    assert np.array_equal(svm_predict(model, gram), names)


def test_one_vs_rest_for_three_classes():
    generator = np.random.default_rng(11)
    centers = np.array([(-3.0, 0.0), (3.0, 0.0), (0.0, 4.0)])
    features = np.vstack([generator.normal(loc=center, scale=0.4, size=(10, 2)) for center in centers])
    labels = np.repeat([0, 1, 2], 10)
    gram = rbf_kernel(features, gamma=0.5)
    model = svm_fit(gram, labels, C=10.0)
    assert len(model.machines) == 3
    assert np.array_equal(svm_predict(model, gram), labels)


def test_invalid_training_inputs(blobs):
    gram = rbf_kernel(blobs.features, gamma=0.5)
    with pytest.raises(InsufficientSamplesError):
        smo_train(gram, np.ones(len(blobs)))
    with pytest.raises(InsufficientSamplesError):
        svm_fit(gram, np.zeros(len(blobs)))
    with pytest.raises(ShapeMismatchError):
        smo_train(GramMatrix(np.ones((2, 3))), [-1, 1])
    with pytest.raises(ValueError):
        smo_train(gram, np.where(blobs.target == 1, 1, 0))


def _project_onto_feasible_set(values, labels, C):
    """Euclidean projection onto {0 <= alpha <= C, labels . alpha = 0} by bisection on the multiplier."""
    low, high = -np.abs(values).max() - C, np.abs(values).max() + C
    for _ in range(60):
        middle = (low + high) / 2.0
        if np.clip(values + middle * labels, 0.0, C) @ labels < 0.0:
            low = middle
        else:
            high = middle
    return np.clip(values + (low + high) / 2.0 * labels, 0.0, C)


def _projected_gradient_dual(kernel, labels, C, iterations=4000):
    """Accelerated projected gradient ascent on the SVM dual."""
    hessian = np.outer(labels, labels) * kernel
    step = 1.0 / np.linalg.eigvalsh(hessian).max()
    alphas = np.zeros(labels.shape[0])
    momentum, t = alphas.copy(), 1.0
    for _ in range(iterations):
        gradient = 1.0 - hessian @ momentum
        updated = _project_onto_feasible_set(momentum + step * gradient, labels, C)
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        momentum = updated + (t - 1.0) / t_next * (updated - alphas)
        alphas, t = updated, t_next
    return alphas


def test_dual_optimum_matches_projected_gradient_reference():
    generator = np.random.default_rng(21)
    for _ in range(10):
        n_neg, n_pos = generator.integers(4, 13, size=2)
        features = np.vstack([
            generator.normal(loc=(-2.0, 0.0), scale=0.5, size=(n_neg, 2)),
            generator.normal(loc=(2.0, 0.0), scale=0.5, size=(n_pos, 2)),
        ])
        labels = np.concatenate([-np.ones(n_neg), np.ones(n_pos)])
        gram = rbf_kernel(features, gamma=0.5)

        machine = smo_train(gram, labels, C=10.0, tol=1e-6)
        ours = dual_objective(_full_alphas(machine, labels), labels, gram.values)
        reference = dual_objective(_projected_gradient_dual(gram.values, labels, 10.0), labels, gram.values)
        assert ours == pytest.approx(reference, abs=1e-4)
