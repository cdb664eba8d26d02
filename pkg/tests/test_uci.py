"""
Desk-scale checks against public UCI datasets.

Place the files below in ``data/uci`` (or point ``DEK_UCI_DIR`` elsewhere);
missing files skip their test. The energy file must hold only the eight
inputs and the heating load, as a headed CSV with target column ``Y1``.
"""

import pytest

from scripts.experiment import ExperimentConfig, run_eval, run_train

CASES = [
    # file, schema, metric, expected, tolerance
    ("pima-indians-diabetes.csv", {'target_column': 8, 'header': False}, 'accuracy', 0.7865, 0.04),
    ("waveform.data", {'target_column': 21, 'header': False}, 'accuracy', 0.8704, 0.04),
    ("airfoil_self_noise.dat", {'target_column': 5, 'header': False, 'delimiter': '\t', 'task': 'regression'},
     'r2', 0.9195, 0.05),
    ("energy_efficiency.csv", {'target_column': 'Y1', 'task': 'regression'}, 'r2', 0.9783, 0.03),
]


@pytest.mark.slow
@pytest.mark.parametrize("filename, schema, metric, expected, tolerance", CASES)
def test_desk_scale_reproduction(uci_dir, tmp_path, filename, schema, metric, expected, tolerance):
    path = uci_dir / filename
    if not path.is_file():
        pytest.skip(f"{filename} not present in {uci_dir}")
    config = ExperimentConfig.model_validate({
        'data': {'path': str(path), **schema},
        'architecture': {'width_factor': 2},
        'training': {'learning_rate': 0.1, 'epochs': 60, 'batch_size': 256, 'seed': 0,
                     'gamma': 1.0},
        'consumer': {'k': 5},
        'paths': {'out_dir': str(tmp_path), 'run_name': path.stem},
    })
    model_path = run_train(config).artifacts['model']
    score = run_eval(config, model_path).metrics[metric]
    assert score == pytest.approx(expected, abs=tolerance)
