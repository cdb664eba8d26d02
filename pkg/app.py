"""
JSON service over a trained DEK model file.

The model path comes from ``app.config['MODEL_PATH']`` or the ``DEK_MODEL_PATH``
setting. Raw feature vectors sent to the API are standardized with the
statistics stored in the model file unless ``"standardize": false`` is given.
"""
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
from flask import Flask, jsonify, request

from scripts.dek_model import Task, dek_forward, gram
from scripts.env_utils import configure_logging, get_setting
from scripts.errors import ConfigError, DekError, ShapeMismatchError
from scripts.experiment import ModelBundle, load_bundle
from scripts.knn import knn_predict

logger = logging.getLogger(__name__)

# Initialize the Flask application
app = Flask(__name__)
app.config['MODEL_PATH'] = get_setting('DEK_MODEL_PATH')


class ModelStore:
    """
    Loads the configured model file once and caches it.

    A change of ``app.config['MODEL_PATH']`` or a call to ``refresh`` forces a reload.
    """

    def __init__(self) -> None:
        self._bundle: Optional[ModelBundle] = None
        self._path: Optional[Path] = None

    def get(self) -> ModelBundle:
        configured = app.config.get('MODEL_PATH')
        if not configured:
            raise ConfigError("no model configured (set DEK_MODEL_PATH)")
        path = Path(configured)
        if self._bundle is None or path != self._path:
            self._bundle = load_bundle(path)
            self._path = path
            logger.info("Serving model %s", path)
        return self._bundle

    def refresh(self) -> ModelBundle:
        self._bundle = None
        return self.get()


model_store = ModelStore()


def _payload() -> Dict[str, Any]:
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        raise ShapeMismatchError("request body must be a JSON object")
    return data


def _samples(bundle: ModelBundle, data: Dict[str, Any], key: str, ndim: int = 2) -> np.ndarray:
    """
    Read a feature vector (ndim=1) or matrix (ndim=2) from the request body.

    Raises:
        ShapeMismatchError: If the field is missing, ragged or not numeric.
    """
    if key not in data:
        raise ShapeMismatchError(f"missing field {key!r}")
    try:
        values = np.asarray(data[key], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ShapeMismatchError(f"field {key!r} must hold numbers") from exc
    if values.ndim != ndim:
        raise ShapeMismatchError(f"field {key!r} must be {ndim}-D, got shape {values.shape}")
    if values.shape[-1] != bundle.model.input_dim:
        raise ShapeMismatchError(f"field {key!r} has {values.shape[-1]} features, model expects {bundle.model.input_dim}")
    if data.get('standardize', True) and bundle.standardization is not None:
        values = bundle.standardization.apply(values)
    return values


@app.errorhandler(DekError)
def handle_dek_error(error: DekError):
    status = 503 if isinstance(error, ConfigError) else 400
    logger.warning("Request failed: %s", error.as_line())
    return jsonify(error.as_payload()), status


@app.errorhandler(ValueError)
def handle_value_error(error: ValueError):
    return jsonify({'success': False, 'error': str(error), 'code': 'INVALID_ARGUMENT'}), 400


@app.errorhandler(500)
def handle_internal_error(error):
    logger.exception("Unhandled error while serving %s", request.path)
    return jsonify({'success': False, 'error': 'internal server error'}), 500


@app.route('/api/model')
def api_model():
    """Describe the served model: architecture, task, features and labels."""
    bundle = model_store.get()
    return jsonify({
        'success': True,
        'model': bundle.model.summary(),
        'feature_names': list(bundle.reference.feature_names),
        'label_names': list(bundle.reference.label_names),
        'reference_samples': len(bundle.reference),
        'standardized': bundle.standardization is not None,
    })


@app.route('/api/similarity', methods=['POST'])
def api_similarity():
    """K(x_i, x_j) for one pair: ``{"x_i": [...], "x_j": [...]}``."""
    bundle = model_store.get()
    data = _payload()
    similarity, _ = dek_forward(bundle.model, _samples(bundle, data, 'x_i', 1), _samples(bundle, data, 'x_j', 1))
    return jsonify({'success': True, 'similarity': similarity})


@app.route('/api/gram', methods=['POST'])
def api_gram():
    """
    Gram matrix of ``rows`` against ``columns`` (or against themselves when
    ``columns`` is omitted).
    """
    bundle = model_store.get()
    data = _payload()
    rows = _samples(bundle, data, 'rows')
    columns = _samples(bundle, data, 'columns') if 'columns' in data else None
    matrix = gram(bundle.model, rows, columns)
    return jsonify({'success': True, 'gram': matrix.values.tolist(), 'symmetric': matrix.symmetric_flag})


@app.route('/api/classify', methods=['POST'])
def api_classify():
    """
    KNN predictions for ``samples`` against the training reference set stored
    in the model file. Classification answers with label names, regression
    with predicted values.
    """
    bundle = model_store.get()
    data = _payload()
    samples = _samples(bundle, data, 'samples')
    reference = bundle.reference
    try:
        k = int(data.get('k', 5))
    except (TypeError, ValueError) as exc:
        raise ShapeMismatchError("k must be an integer") from exc
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    cross = gram(bundle.model, samples, reference.features)
    k = min(k, len(reference))
    if bundle.model.task is Task.REGRESSION:
        predictions = knn_predict(cross, reference.target, k, regression=True, weighted=bool(data.get('weighted')))
        return jsonify({'success': True, 'predictions': predictions.tolist()})
    indices = knn_predict(cross, reference.target, k)
    labels = [reference.label_names[index] if reference.label_names else str(index) for index in indices.tolist()]
    return jsonify({'success': True, 'predictions': labels, 'class_indices': indices.tolist()})


if __name__ == "__main__":
    configure_logging()
    # Get configuration from environment variables
    host = os.environ.get('FLASK_HOST', '127.0.0.1')
    port = int(os.environ.get('PORT', os.environ.get('FLASK_PORT', 5000)))
    debug_mode = os.environ.get('FLASK_DEBUG', 'False').lower() == 'true'
    app.run(host=host, port=port, debug=debug_mode)
