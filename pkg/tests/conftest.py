"""
Pytest configuration and shared fixtures for the DEK toolkit tests.
"""

import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from sklearn.datasets import make_moons

# Add the project root to the Python path
project_root = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(project_root))

from scripts.DataManager import Dataset  # noqa: E402
from scripts.dek_model import Task, build_model  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains a model to convergence (minutes)")


@pytest.fixture
def rng():
    """Seeded generator so every test draws the same numbers."""
    return np.random.default_rng(1234)


@pytest.fixture
def small_model():
    """2-input classification DEK with the default two embedding and two kernel layers."""
    return build_model(input_dim=2, task=Task.CLASSIFICATION, width_factor=2, seed=7)


@pytest.fixture
def blobs():
    """Two well separated Gaussian blobs, 20 points each."""
    generator = np.random.default_rng(3)
    features = np.vstack([
        generator.normal(loc=(-2.0, -2.0), scale=0.4, size=(20, 2)),
        generator.normal(loc=(2.0, 2.0), scale=0.4, size=(20, 2)),
    ])
    target = np.repeat([0, 1], 20)
    return Dataset(features=features, target=target, task=Task.CLASSIFICATION, label_names=("a", "b"))


def moons_frame(n_samples: int = 400, noise: float = 0.1, seed: int = 0) -> pd.DataFrame:
    features, labels = make_moons(n_samples=n_samples, noise=noise, random_state=seed)
    return pd.DataFrame({'x1': features[:, 0], 'x2': features[:, 1], 'label': labels})


@pytest.fixture
def moons_csv(tmp_path):
    """Seeded two-moons dataset written as a headed CSV file."""
    path = tmp_path / "moons.csv"
    moons_frame().to_csv(path, index=False)
    return path


@pytest.fixture
def small_moons_csv(tmp_path):
    path = tmp_path / "small_moons.csv"
    moons_frame(n_samples=60, noise=0.1, seed=1).to_csv(path, index=False)
    return path


@pytest.fixture
def regression_csv(tmp_path):
    """Smooth 2-input regression surface with a positive target."""
    generator = np.random.default_rng(5)
    features = generator.uniform(-1.0, 1.0, size=(60, 2))
    target = 2.0 + np.sin(2.0 * features[:, 0]) + features[:, 1] ** 2
    path = tmp_path / "surface.csv"
    pd.DataFrame({'a': features[:, 0], 'b': features[:, 1], 'y': target}).to_csv(path, index=False)
    return path


@pytest.fixture
def uci_dir():
    """Directory holding public UCI files; tests using it skip when it is absent."""
    directory = Path(os.getenv('DEK_UCI_DIR', project_root / 'data' / 'uci'))
    if not directory.is_dir():
        pytest.skip("UCI datasets not available (set DEK_UCI_DIR)")
    return directory


@pytest.fixture
def quick_config(tmp_path, small_moons_csv):
    """Experiment config that trains a small DEK on the 60-point moons file in seconds."""
    from scripts.experiment import ExperimentConfig

    return ExperimentConfig.model_validate({
        'data': {'path': str(small_moons_csv), 'target_column': 'label'},
        'training': {'learning_rate': 0.2, 'epochs': 3, 'batch_size': 64, 'seed': 5},
        'consumer': {'k': 3, 'components': 2, 'max_passes': 200},
        'baseline': {'gamma_grid': [0.5, 2.0], 'C_grid': [1.0, 8.0], 'folds': 3},
        'paths': {'out_dir': str(tmp_path / 'runs'), 'run_name': 'quick'},
    })


@pytest.fixture
def trained_model(quick_config):
    """Path of a model file trained with ``quick_config``."""
    from scripts.experiment import run_train

    return run_train(quick_config).artifacts['model']
