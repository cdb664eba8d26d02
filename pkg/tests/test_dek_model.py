"""
Tests for the DEK architecture: combine layer, paired forward/backward,
symmetry, Gram matrices and the model file.
"""

import json

import numpy as np
import pytest

from scripts.dek_model import (
    DekModel,
    Task,
    build_model,
    combine,
    combine_backward,
    dek_backward,
    dek_forward,
    dek_forward_batch,
    gram,
    load_model,
    save_model,
)
from scripts.errors import ModelFormatError, ShapeMismatchError
from scripts.netcore import Activation, LayerParams, MlpParams, mlp_backward


def _zeroed(model: DekModel) -> DekModel:
    def zero(params):
        if params is None:
            return None
        layers = tuple(LayerParams(np.zeros_like(p.weights), np.zeros_like(p.biases)) for p in params.layers)
        return MlpParams(layers, params.hidden_activation, params.output_activation)

    return DekModel(zero(model.embedding), zero(model.kernel), model.width_factor, model.input_dim, model.task)


def _perturbed(model: DekModel, network: str, layer_index: int, which: str, flat_index: int, delta: float) -> DekModel:
    params = getattr(model, network)
    layers = list(params.layers)
    weights = layers[layer_index].weights.copy()
    biases = layers[layer_index].biases.copy()
    (weights if which == 'w' else biases).flat[flat_index] += delta
    layers[layer_index] = LayerParams(weights, biases)
    replaced = MlpParams(tuple(layers), params.hidden_activation, params.output_activation)
    parts = {'embedding': model.embedding, 'kernel': model.kernel, network: replaced}
    return DekModel(parts['embedding'], parts['kernel'], model.width_factor, model.input_dim, model.task)


def test_combine_examples():
    assert combine(np.array([1.0, 2.0]), np.array([3.0, 4.0])).tolist() == [3.0, 8.0, 2.0, 2.0]
    o = np.array([1.5, -2.0, 0.25])
    assert combine(o, o).tolist() == [2.25, 4.0, 0.0625, 0.0, 0.0, 0.0]
    assert combine(np.array([0.0, 0.0]), np.array([5.0, -1.0])).tolist() == [0.0, 0.0, 5.0, 1.0]


def test_combine_rejects_length_mismatch():
    with pytest.raises(ShapeMismatchError):
        combine(np.ones(2), np.ones(3))


def test_combine_backward_hand_example():
    grad_i, grad_j = combine_backward(np.array([2.0]), np.array([3.0]), np.array([1.0, 1.0]))
    assert grad_i.tolist() == [2.0]
    assert grad_j.tolist() == [3.0]
    zero_i, zero_j = combine_backward(np.array([2.0]), np.array([3.0]), np.zeros(2))
    assert not zero_i.any() and not zero_j.any()


def test_combine_backward_matches_finite_differences(rng):
    o_i, o_j = rng.normal(size=4), rng.normal(size=4)
    functional = rng.normal(size=8)
    grad_i, grad_j = combine_backward(o_i, o_j, functional)
    step = 1e-6
    for m in range(4):
        bump = np.zeros(4)
        bump[m] = step
        numeric_i = (combine(o_i + bump, o_j) @ functional - combine(o_i - bump, o_j) @ functional) / (2 * step)
        numeric_j = (combine(o_i, o_j + bump) @ functional - combine(o_i, o_j - bump) @ functional) / (2 * step)
        assert numeric_i == pytest.approx(grad_i[m], rel=1e-6, abs=1e-8)
        assert numeric_j == pytest.approx(grad_j[m], rel=1e-6, abs=1e-8)


@pytest.mark.parametrize("width_factor", [1, 2, 3, 4])
def test_width_rule(width_factor):
    model = build_model(input_dim=3, width_factor=width_factor, embedding_layers=2, kernel_layers=2)
    k = 3 * width_factor
    assert [layer.out_dim for layer in model.embedding.layers] == [k, k]
    assert [layer.out_dim for layer in model.kernel.layers] == [2 * k, 2 * k, 1]
    assert model.kernel.in_dim == 2 * k
    assert model.kernel.output_activation is Activation.SIGMOID
    assert model.embedding.output_activation is Activation.RELU


def test_kernel_only_variant_combines_raw_inputs():
    model = build_model(input_dim=3, width_factor=2, embedding_layers=0, kernel_layers=1)
    assert model.embedding is None
    assert model.kernel.in_dim == 6
    assert model.kernel.layers[0].out_dim == 12
    similarity, _ = dek_forward(model, np.ones(3), np.zeros(3))
    assert 0.0 < similarity < 1.0


def test_regression_head_uses_relu():
    model = build_model(input_dim=2, task=Task.REGRESSION)
    assert model.kernel.output_activation is Activation.RELU


def test_symmetry_is_bit_exact_over_many_draws():
    rng = np.random.default_rng(2024)
    for draw in range(500):
        width_factor = 1 + draw % 4
        input_dim = int(rng.integers(1, 6))
        task = Task.CLASSIFICATION if draw % 2 else Task.REGRESSION
        model = build_model(input_dim, task, width_factor=width_factor, seed=draw)
        x, y = rng.normal(size=input_dim), rng.normal(size=input_dim)
        assert dek_forward(model, x, y)[0] == dek_forward(model, y, x)[0]


def test_zero_parameter_models():
    classifier = _zeroed(build_model(input_dim=2, task=Task.CLASSIFICATION))
    regressor = _zeroed(build_model(input_dim=2, task=Task.REGRESSION))
    assert dek_forward(classifier, np.array([1.0, 2.0]), np.array([-3.0, 0.5]))[0] == 0.5
    assert dek_forward(regressor, np.array([1.0, 2.0]), np.array([-3.0, 0.5]))[0] == 0.0


def test_forward_rejects_wrong_width(small_model):
    with pytest.raises(ShapeMismatchError):
        dek_forward(small_model, np.ones(3), np.ones(2))


def test_output_ranges(rng):
    classifier = build_model(input_dim=3, task=Task.CLASSIFICATION, seed=1)
    regressor = build_model(input_dim=3, task=Task.REGRESSION, seed=1)
    left, right = rng.normal(scale=3.0, size=(50, 3)), rng.normal(scale=3.0, size=(50, 3))
    similarities, _ = dek_forward_batch(classifier, left, right)
    assert np.all((similarities > 0.0) & (similarities < 1.0))
    assert np.all(dek_forward_batch(regressor, left, right)[0] >= 0.0)


def test_batch_matches_single_pairs(small_model, rng):
    left, right = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    batched, _ = dek_forward_batch(small_model, left, right)
    single = [dek_forward(small_model, a, b)[0] for a, b in zip(left, right)]
    assert np.allclose(batched, single, rtol=0, atol=1e-12)


def test_backward_zero_seed_gives_zero_grads(small_model, rng):
    _, trace = dek_forward(small_model, rng.normal(size=2), rng.normal(size=2))
    grads = dek_backward(small_model, trace, 0.0)
    assert all(not g.any() for g in grads.kernel.weights + grads.embedding.weights)


def test_self_pair_branches_contribute_equally(small_model, rng):
    x = rng.normal(size=2)
    _, trace = dek_forward(small_model, x, x)
    _, combined_grad = mlp_backward(small_model.kernel, trace.head, np.ones(1))
    grad_i, grad_j = combine_backward(trace.embedded_i, trace.embedded_j, combined_grad)
    k = small_model.embedding_width
    assert np.array_equal(grad_i, grad_j)
    assert np.array_equal(grad_i, combined_grad[:k] * trace.embedded_i)

    single_branch, _ = mlp_backward(small_model.embedding, trace.branch_i, grad_i)
    grads = dek_backward(small_model, trace, 1.0)
    for total, branch in zip(grads.embedding.weights, single_branch.weights):
        assert np.allclose(total, 2.0 * branch)


def _check_against_finite_differences(model, x_i, x_j):
    _, trace = dek_forward(model, x_i, x_j)
    grads = dek_backward(model, trace, 1.0)
    step = 1e-5
    networks = [('kernel', grads.kernel)]
    if model.embedding is not None:
        networks.append(('embedding', grads.embedding))
    for network, network_grads in networks:
        params = getattr(model, network)
        for layer_index in range(len(params.layers)):
            for which, analytic in (('w', network_grads.weights[layer_index]), ('b', network_grads.biases[layer_index])):
                for flat_index in range(analytic.size):
                    plus = dek_forward(_perturbed(model, network, layer_index, which, flat_index, step), x_i, x_j)[0]
                    minus = dek_forward(_perturbed(model, network, layer_index, which, flat_index, -step), x_i, x_j)[0]
                    numeric = (plus - minus) / (2 * step)
                    expected = analytic.flat[flat_index]
                    assert abs(numeric - expected) <= 1e-4 * max(abs(numeric), abs(expected)) + 1e-8


@pytest.mark.parametrize("draw", range(20))
def test_end_to_end_gradients_match_finite_differences(draw):
    rng = np.random.default_rng(100 + draw)
    input_dim = int(rng.integers(1, 6))
    model = build_model(
        input_dim,
        Task.CLASSIFICATION if draw % 3 else Task.REGRESSION,
        width_factor=int(rng.integers(1, 3)),
        embedding_layers=int(rng.integers(1, 3)),
        kernel_layers=int(rng.integers(1, 3)),
        hidden_activation=Activation.TANH if draw % 2 else Activation.RELU,
        seed=draw,
    )
    _check_against_finite_differences(model, rng.normal(size=input_dim), rng.normal(size=input_dim))


def test_kernel_only_gradients_match_finite_differences(rng):
    model = build_model(3, Task.CLASSIFICATION, width_factor=1, embedding_layers=0, kernel_layers=2,
                        hidden_activation=Activation.TANH, seed=4)
    _check_against_finite_differences(model, rng.normal(size=3), rng.normal(size=3))


def test_batched_backward_sums_pair_gradients(small_model, rng):
    left, right = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    upstream = np.array([0.5, -1.0, 2.0])
    _, trace = dek_forward_batch(small_model, left, right)
    batched = dek_backward(small_model, trace, upstream)
    singles = [dek_backward(small_model, dek_forward(small_model, a, b)[1], g) for a, b, g in zip(left, right, upstream)]
    total = singles[0].kernel + singles[1].kernel + singles[2].kernel
    for a, b in zip(batched.kernel.weights, total.weights):
        assert np.allclose(a, b)


def test_gram_is_symmetric_and_matches_pairs(small_model, rng):
    samples = rng.normal(size=(6, 2))
    matrix = gram(small_model, samples)
    assert matrix.symmetric_flag
    assert np.array_equal(matrix.values, matrix.values.T)
    assert np.all((matrix.values > 0.0) & (matrix.values < 1.0))

    left, right = rng.normal(size=(3, 2)), rng.normal(size=(2, 2))
    cross = gram(small_model, left, right)
    assert cross.shape == (3, 2)
    for p in range(3):
        for q in range(2):
            assert cross.values[p, q] == pytest.approx(dek_forward(small_model, left[p], right[q])[0], abs=1e-12)


def test_gram_of_empty_set_is_empty(small_model):
    assert gram(small_model, np.empty((0, 2)), np.ones((4, 2))).shape == (0, 4)


def test_model_file_round_trip_is_exact(tmp_path, rng):
    model = build_model(input_dim=3, task=Task.REGRESSION, width_factor=2, seed=11)
    path = save_model(tmp_path / "model.json", model, {'feature_names': ['a', 'b', 'c']})
    loaded, metadata = load_model(path)
    assert metadata == {'feature_names': ['a', 'b', 'c']}
    assert loaded.task is Task.REGRESSION
    for original, restored in zip(model.embedding.layers + model.kernel.layers, loaded.embedding.layers + loaded.kernel.layers):
        assert np.array_equal(original.weights, restored.weights)
        assert np.array_equal(original.biases, restored.biases)
    samples = rng.normal(size=(4, 3))
    assert np.array_equal(gram(model, samples).values, gram(loaded, samples).values)


def test_kernel_only_model_round_trips(tmp_path):
    model = build_model(input_dim=2, embedding_layers=0, seed=3)
    loaded, _ = load_model(save_model(tmp_path / "m.json", model))
    assert loaded.embedding is None
    assert loaded.kernel_layers == model.kernel_layers


def test_load_rejects_bad_files(tmp_path, small_model):
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "missing.json")

    garbage = tmp_path / "garbage.json"
    garbage.write_text("{not json")
    with pytest.raises(ModelFormatError):
        load_model(garbage)

    path = save_model(tmp_path / "model.json", small_model)
    document = json.loads(path.read_text())
    document['version'] = 99
    path.write_text(json.dumps(document))
    with pytest.raises(ModelFormatError):
        load_model(path)


@pytest.mark.parametrize("field, value", [
    ('format', 'other-model'),
    ('width_factor', 1),
    ('task', 'regression'),
])
def test_load_rejects_files_breaking_the_architecture(tmp_path, small_model, field, value):
    path = save_model(tmp_path / "model.json", small_model)
    document = json.loads(path.read_text())
    document[field] = value
    path.write_text(json.dumps(document))
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_load_rejects_wrong_head_activation(tmp_path, small_model):
    path = save_model(tmp_path / "model.json", small_model)
    document = json.loads(path.read_text())
    document['kernel']['output_activation'] = 'identity'
    path.write_text(json.dumps(document))
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_model_enforces_width_rule_and_head():
    model = build_model(input_dim=2, width_factor=2, seed=0)
    with pytest.raises(ShapeMismatchError):
        DekModel(model.embedding, model.kernel, 1, model.input_dim, model.task)
    narrow = build_model(input_dim=2, width_factor=1, embedding_layers=0, seed=0)
    wide = build_model(input_dim=2, width_factor=3, embedding_layers=0, seed=0)
    with pytest.raises(ShapeMismatchError):
        DekModel(None, wide.kernel, narrow.width_factor, narrow.input_dim, narrow.task)
    with pytest.raises(ValueError):
        DekModel(model.embedding, model.kernel, model.width_factor, model.input_dim, Task.REGRESSION)
