"""
Delimited text exports. Every file starts with a header line:

* loss history: ``epoch,mean_loss`` (epochs counted from 1)
* Gram matrix: ``row,c0,c1,...`` (one line per left-hand sample)
* PR curve: ``recall,precision``
* kPCA coordinates: ``index,c1,...,cn``
* pairs: ``i,j,target``
"""
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from scripts.gram_matrix import GramMatrix
from scripts.pairing import PairBatch
from scripts.ranking import PrCurve


def _write(frame: pd.DataFrame, path, index: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=index, float_format="%.17g")
    return path


def write_loss_history(path, history: Sequence[float]) -> Path:
    frame = pd.DataFrame({'epoch': np.arange(1, len(history) + 1), 'mean_loss': list(history)})
    return _write(frame, path)


def read_loss_history(path) -> list[float]:
    return pd.read_csv(path)['mean_loss'].tolist()


def write_gram(path, gram: GramMatrix) -> Path:
    return _write(gram.to_frame(), path, index=True)


def write_pr_curve(path, curve: PrCurve) -> Path:
    return _write(curve.to_frame(), path)


def write_kpca_coordinates(path, coordinates: np.ndarray, indices: Optional[Sequence[int]] = None) -> Path:
    coordinates = np.asarray(coordinates, dtype=np.float64)
    frame = pd.DataFrame(coordinates, columns=[f"c{c + 1}" for c in range(coordinates.shape[1])])
    frame.insert(0, 'index', np.arange(coordinates.shape[0]) if indices is None else np.asarray(indices))
    return _write(frame, path)


def write_pairs(path, batch: PairBatch) -> Path:
    return _write(batch.to_frame(), path)
