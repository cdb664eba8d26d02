import numpy as np
import pandas as pd

from scripts.exports import (
    read_loss_history,
    write_gram,
    write_kpca_coordinates,
    write_loss_history,
    write_pairs,
    write_pr_curve,
)
from scripts.gram_matrix import GramMatrix
from scripts.pairing import PairBatch
from scripts.ranking import rank_and_pr_curve
from scripts.utils.experiment_path import ExperimentPath


def _header(path):
    return path.read_text().splitlines()[0]


def test_loss_history_is_read_back_exactly(tmp_path):
    history = [0.6931471805599453, 0.1 + 0.2, 1e-17]
    path = write_loss_history(tmp_path / "nested" / "loss.csv", history)
    assert _header(path) == "epoch,mean_loss"
    assert read_loss_history(path) == history


def test_gram_layout(tmp_path):
    path = write_gram(tmp_path / "gram.csv", GramMatrix(np.array([[1.0, 0.25, 0.5]])))
    assert _header(path) == "row,c0,c1,c2"
    assert pd.read_csv(path, index_col="row").to_numpy().tolist() == [[1.0, 0.25, 0.5]]


def test_curve_coordinates_and_pairs_headers(tmp_path):
    curve = rank_and_pr_curve(GramMatrix(np.array([[0.9, 0.1]])), [0], [0, 1])
    assert _header(write_pr_curve(tmp_path / "pr.csv", curve)) == "recall,precision"

    path = write_kpca_coordinates(tmp_path / "kpca.csv", np.zeros((3, 2)), indices=[4, 7, 9])
    assert _header(path) == "index,c1,c2"
    assert pd.read_csv(path)['index'].tolist() == [4, 7, 9]

    pairs = PairBatch(pairs=[[0, 1], [2, 0]], targets=[1, 0])
    assert _header(write_pairs(tmp_path / "pairs.csv", pairs)) == "i,j,target"


def test_experiment_path_layout(tmp_path):
    paths = ExperimentPath("moons run/1", root=str(tmp_path))
    assert paths.run_dir() == tmp_path / "moons_run_1"
    assert paths.ensure_run_dir().is_dir()
    assert paths.model_file().name == "model.json"
    assert paths.report_file("baseline-rbf").name == "report_baseline-rbf.json"
    assert paths.gram_file("test gram").name == "test_gram.csv"
