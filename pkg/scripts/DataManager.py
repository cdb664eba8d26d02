"""
Dataset loading and preprocessing.

CSV files are parsed with pandas; rows with unparseable cells are rejected and
counted. Classification targets are mapped to a stable label dictionary.
Splits are seeded and (for classification) stratified, and standardization
statistics always come from the training split alone.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from config import MAX_REJECTED_FRACTION
from scripts.dek_model import Task
from scripts.errors import DataLoadError, ShapeMismatchError

logger = logging.getLogger(__name__)


class CsvSchema(BaseModel):
    """How to read a dataset file."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    target_column: Union[str, int]
    task: Task = Task.CLASSIFICATION
    delimiter: str = ","
    header: bool = True


@dataclass(frozen=True)
class Standardization:
    """Per-column z-scoring statistics captured from a training split."""

    means: np.ndarray
    stds: np.ndarray
    scaled: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.means.shape[0]:
            raise ShapeMismatchError(f"expected {self.means.shape[0]} features, got {features.shape[-1]}")
        out = features.copy()
        out[..., self.scaled] = (features[..., self.scaled] - self.means[self.scaled]) / self.stds[self.scaled]
        return out

    def to_dict(self) -> dict:
        return {'means': self.means.tolist(), 'stds': self.stds.tolist(), 'scaled': self.scaled.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Standardization":
        return cls(np.array(data['means'], dtype=np.float64), np.array(data['stds'], dtype=np.float64),
                   np.array(data['scaled'], dtype=bool))


@dataclass(frozen=True)
class Dataset:
    """
    Feature matrix with class indices or continuous targets.

    Attributes:
        features: (n x d) float matrix without NaN.
        target: (n,) class indices (classification) or floats (regression).
        task: classification or regression.
        feature_names: Column names of ``features``.
        label_names: Original label for each class index (classification only).
        row_ids: Row positions in the source file, carried through splits.
        standardization: Statistics applied to ``features``, if any.
        rejected_rows: Rows dropped while loading.
    """

    features: np.ndarray
    target: np.ndarray
    task: Task
    feature_names: tuple[str, ...] = ()
    label_names: tuple[str, ...] = ()
    row_ids: Optional[np.ndarray] = None
    standardization: Optional[Standardization] = None
    rejected_rows: int = 0

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise ShapeMismatchError(f"features must be 2-D, got shape {features.shape}")
        task = Task(self.task)
        target = np.asarray(self.target, dtype=np.int64 if task is Task.CLASSIFICATION else np.float64)
        if target.shape != (features.shape[0],):
            raise ShapeMismatchError(f"{features.shape[0]} rows but target has shape {target.shape}")
        if np.isnan(features).any():
            raise DataLoadError("features contain NaN")
        row_ids = np.arange(features.shape[0]) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        feature_names = tuple(self.feature_names) or tuple(f"x{i}" for i in range(features.shape[1]))
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "task", task)
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "feature_names", feature_names)
        object.__setattr__(self, "label_names", tuple(self.label_names))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.target) if self.task is Task.CLASSIFICATION else np.array([], dtype=np.int64)

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(self, features=self.features[indices], target=self.target[indices], row_ids=self.row_ids[indices])


def _label_dictionary(labels: pd.Series) -> tuple[str, ...]:
    """Distinct labels, numerically ordered when every label parses as a number."""
    distinct = labels.unique().tolist()
    numeric = pd.to_numeric(pd.Series(distinct), errors="coerce")
    if not numeric.isna().any():
        return tuple(label for _, label in sorted(zip(numeric.tolist(), distinct)))
    return tuple(sorted(distinct))


def load_csv(path: Union[str, Path], schema: CsvSchema, label_names: Optional[tuple[str, ...]] = None) -> Dataset:
    """
    Parse a delimited file into a Dataset.

    Args:
        path: The delimited file.
        schema: Target column, task, delimiter and header flag.
        label_names: Existing label dictionary to reuse (e.g. a trained
            model's); rows with labels outside it are rejected.

    Raises:
        DataLoadError: If the file is unreadable, the target column is missing,
            or more than half of the rows are rejected.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, sep=schema.delimiter, header=0 if schema.header else None, dtype=str,
                            skipinitialspace=True)
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataLoadError(f"cannot read {path}: {exc}") from exc

    if not schema.header:
        frame.columns = [str(column) for column in range(frame.shape[1])]
    target_column = str(schema.target_column)
    if target_column not in frame.columns:
        raise DataLoadError(f"target column {target_column!r} not found in {path}")

    feature_columns = [column for column in frame.columns if column != target_column]
    features = frame[feature_columns].apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce"))
    raw_target = frame[target_column].fillna("").astype(str).str.strip()
    if schema.task is Task.REGRESSION:
        target_values = pd.to_numeric(raw_target, errors="coerce")
        valid = features.notna().all(axis=1) & target_values.notna()
    else:
        target_values = raw_target
        valid = features.notna().all(axis=1) & (raw_target != "")
        if label_names is not None:
            valid &= raw_target.isin(label_names)

    rejected = int((~valid).sum())
    total = len(frame)
    if total == 0:
        raise DataLoadError(f"{path} holds no data rows")
    if rejected > MAX_REJECTED_FRACTION * total:
        raise DataLoadError(f"{rejected} of {total} rows in {path} could not be parsed")
    if rejected:
        logger.warning("Rejected %d of %d rows in %s", rejected, total, path)

    if schema.task is Task.CLASSIFICATION:
        label_names = tuple(label_names) if label_names is not None else _label_dictionary(target_values[valid])
        index_of = {label: index for index, label in enumerate(label_names)}
        target = target_values[valid].map(index_of).to_numpy(dtype=np.int64)
    else:
        label_names = ()
        target = target_values[valid].to_numpy(dtype=np.float64)

    return Dataset(
        features=features[valid].to_numpy(dtype=np.float64),
        target=target,
        task=schema.task,
        feature_names=tuple(feature_columns),
        label_names=label_names,
        row_ids=np.flatnonzero(valid.to_numpy()),
        rejected_rows=rejected,
    )


def split(dataset: Dataset, fraction: float, seed: int, stratify: bool = True) -> tuple[Dataset, Dataset]:
    """
    Seeded shuffle-and-slice into (train, test).

    Classification splits are stratified per class with fractional samples
    rounded into train; a class with a single member goes to train.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction must lie in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)

    if stratify and dataset.task is Task.CLASSIFICATION:
        train_parts, test_parts = [], []
        for label in dataset.classes:
            members = rng.permutation(np.flatnonzero(dataset.target == label))
            if members.size == 1:
                logger.warning("Class %s has a single member; placing it in the training split", label)
            n_train = math.ceil(fraction * members.size)
            train_parts.append(members[:n_train])
            test_parts.append(members[n_train:])
        train_index = np.sort(np.concatenate(train_parts))
        test_index = np.sort(np.concatenate(test_parts))
    else:
        order = rng.permutation(len(dataset))
        n_train = math.ceil(fraction * len(dataset))
        train_index = np.sort(order[:n_train])
        test_index = np.sort(order[n_train:])

    return dataset.subset(train_index), dataset.subset(test_index)


def fit_standardization(features: np.ndarray) -> Standardization:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] == 0:
        raise ValueError("cannot standardize an empty training split")
    means = features.mean(axis=0)
    stds = features.std(axis=0)
    scaled = stds > 0
    if not scaled.all():
        logger.warning("%d zero-variance feature(s) pass through unscaled", int((~scaled).sum()))
    return Standardization(means=means, stds=stds, scaled=scaled)


def standardize(train: Dataset, test: Optional[Dataset] = None) -> tuple[Dataset, Optional[Dataset], Standardization]:
    """
    Z-score features with statistics of ``train`` only and apply the same
    transform to ``test``. Zero-variance columns are left unchanged.
    """
    stats = fit_standardization(train.features)
    train_out = replace(train, features=stats.apply(train.features), standardization=stats)
    test_out = None if test is None else replace(test, features=stats.apply(test.features), standardization=stats)
    return train_out, test_out, stats


class DataManager:
    """
    Loads one dataset file and caches it.

    The file is read once on first access; ``refresh_data`` forces a reload.

    Attributes:
        path (Path): The dataset file.
        schema (CsvSchema): How the file is parsed.
    """

    def __init__(self, file_path: Union[str, Path], schema: CsvSchema) -> None:
        self.path = Path(file_path)
        self.schema = schema
        self._data: Optional[Dataset] = None

    def get_dataset(self) -> Dataset:
        if self._data is None:
            self._data = load_csv(self.path, self.schema)
            logger.info("Loaded %d rows x %d features from %s", len(self._data), self._data.n_features, self.path)
        return self._data

    def refresh_data(self) -> Dataset:
        logger.info("Refreshing dataset %s", self.path)
        self._data = None
        return self.get_dataset()

    def prepare(self, fraction: float, seed: int, stratify: bool = True,
                standardize_features: bool = True) -> tuple[Dataset, Dataset]:
        """Split the cached dataset and standardize both parts from the training part."""
        train, test = split(self.get_dataset(), fraction, seed, stratify)
        if standardize_features:
            train, test, _ = standardize(train, test)
        return train, test
