"""
Experiment configuration, orchestration and reports.

Each ``run_*`` function backs one CLI subcommand: it loads data and models,
calls the training / kernel-machine modules, writes artifacts into the run
directory and returns an ExperimentReport. Only the training split is ever
consulted for standardization statistics, pairing and grid search.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveFloat, PositiveInt, ValidationError

from config import (
    DEFAULT_CV_FOLDS,
    DEFAULT_EMBEDDING_LAYERS,
    DEFAULT_KERNEL_LAYERS,
    DEFAULT_RBF_C_GRID,
    DEFAULT_RBF_GAMMA_GRID,
    DEFAULT_SVM_C,
    DEFAULT_SVM_MAX_PASSES,
    DEFAULT_SVM_TOL,
)
from scripts.DataManager import CsvSchema, DataManager, Dataset, Standardization, load_csv
from scripts.dek_model import DekModel, Task, build_model, gram, load_model, save_model
from scripts.errors import ConfigError, DegenerateTargetError, TrainingDivergedError
from scripts.exports import write_gram, write_kpca_coordinates, write_loss_history, write_pairs, write_pr_curve
from scripts.gram_matrix import GramMatrix
from scripts.knn import knn_predict
from scripts.kpca import kpca_fit, kpca_project
from scripts.metrics import metric_accuracy, metric_r2, metric_silhouette
from scripts.model_baselines import MODEL_KINDS, fit_baselines
from scripts.netcore import Activation
from scripts.ranking import rank_and_pr_curve
from scripts.rbf_baseline import rbf_grid_search, rbf_kernel
from scripts.svm import svm_fit, svm_predict
from scripts.trainer import ProgressSink, TrainConfig, initial_pairs, train
from scripts.utils.experiment_path import ExperimentPath

logger = logging.getLogger(__name__)


class DataSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: Optional[str] = None
    target_column: Union[str, int] = "target"
    task: Task = Task.CLASSIFICATION
    delimiter: str = ","
    header: bool = True
    split: float = Field(0.5, gt=0.0, lt=1.0)
    standardize: bool = True
    stratify: bool = True

    def schema(self) -> CsvSchema:
        return CsvSchema(target_column=self.target_column, task=self.task, delimiter=self.delimiter, header=self.header)


class ArchitectureSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    width_factor: PositiveInt = 1
    embedding_layers: NonNegativeInt = DEFAULT_EMBEDDING_LAYERS
    kernel_layers: PositiveInt = DEFAULT_KERNEL_LAYERS
    hidden_activation: Activation = Activation.RELU


class ConsumerSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["knn", "svm"] = "knn"
    k: PositiveInt = 5
    weighted: bool = False
    C: PositiveFloat = DEFAULT_SVM_C
    tol: PositiveFloat = DEFAULT_SVM_TOL
    max_passes: PositiveInt = DEFAULT_SVM_MAX_PASSES
    components: PositiveInt = 3


class BaselineSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma_grid: list[PositiveFloat] = Field(default_factory=lambda: list(DEFAULT_RBF_GAMMA_GRID), min_length=1)
    C_grid: list[PositiveFloat] = Field(default_factory=lambda: list(DEFAULT_RBF_C_GRID), min_length=1)
    folds: int = Field(DEFAULT_CV_FOLDS, ge=2)
    models: list[Literal["gb", "rf", "mlp"]] = Field(default_factory=lambda: list(MODEL_KINDS), min_length=1)


class PathsSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    out_dir: Optional[str] = None
    run_name: str = "dek"


class ExperimentConfig(BaseModel):
    """Complete experiment configuration; every key has a default."""

    model_config = ConfigDict(extra="forbid")

    data: DataSection = Field(default_factory=DataSection)
    architecture: ArchitectureSection = Field(default_factory=ArchitectureSection)
    training: TrainConfig = Field(default_factory=TrainConfig)
    consumer: ConsumerSection = Field(default_factory=ConsumerSection)
    baseline: BaselineSection = Field(default_factory=BaselineSection)
    paths: PathsSection = Field(default_factory=PathsSection)

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.md5(canonical.encode('utf-8')).hexdigest()

    def run_path(self) -> ExperimentPath:
        return ExperimentPath(self.paths.run_name, self.paths.out_dir)


# CLI flag -> (section, key)
OVERRIDE_KEYS = {
    'seed': ('training', 'seed'),
    'data': ('data', 'path'),
    'target_col': ('data', 'target_column'),
    'task': ('data', 'task'),
    'split': ('data', 'split'),
    'out_dir': ('paths', 'out_dir'),
    'consumer': ('consumer', 'kind'),
    'k': ('consumer', 'k'),
    'components': ('consumer', 'components'),
    'gamma': ('training', 'gamma'),
    'pairing': ('training', 'pairing'),
    'recall_level': ('training', 'recall_level'),
    'pairing_interval': ('training', 'pairing_interval'),
    'standardize': ('data', 'standardize'),
    'models': ('baseline', 'models'),
}


def load_config(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    """
    Read a JSON config file (or return all defaults when ``path`` is None).

    Raises:
        ConfigError: If the file is missing, not JSON, or fails validation.
    """
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        return ExperimentConfig.model_validate_json(path.read_text(encoding='utf-8'))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(part) for part in first['loc'])
        raise ConfigError(f"invalid config {path}: {location}: {first['msg']}") from exc


def apply_overrides(config: ExperimentConfig, **flags: Any) -> ExperimentConfig:
    """Return a copy of ``config`` with non-None CLI flags applied."""
    document = config.model_dump(mode="json")
    for flag, value in flags.items():
        if value is None:
            continue
        if flag not in OVERRIDE_KEYS:
            raise ConfigError(f"unknown override {flag!r}")
        section, key = OVERRIDE_KEYS[flag]
        document[section][key] = value
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(f"invalid option {'.'.join(str(p) for p in first['loc'])}: {first['msg']}") from exc


class ExperimentReport(BaseModel):
    """Structured outcome of one command run."""

    command: str
    seed: int
    config_hash: str
    started_at: str
    finished_at: str
    metrics: dict[str, Any] = Field(default_factory=dict)
    artifacts: dict[str, str] = Field(default_factory=dict)

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2), encoding='utf-8')
        return path

    def metric_line(self) -> str:
        return " ".join(f"{key}={value}" for key, value in self.metrics.items())


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _finish(command: str, config: ExperimentConfig, started: str, metrics: dict, artifacts: dict) -> ExperimentReport:
    paths = config.run_path()
    paths.ensure_run_dir()
    report_path = paths.report_file(command)
    artifacts = {**{key: str(value) for key, value in artifacts.items()}, 'report': str(report_path)}
    report = ExperimentReport(
        command=command,
        seed=config.training.seed,
        config_hash=config.config_hash(),
        started_at=started,
        finished_at=_now(),
        metrics=metrics,
        artifacts=artifacts,
    )
    report.write(report_path)
    logger.info("%s: %s", command, report.metric_line())
    return report


def prepare_data(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Load, split and (optionally) standardize the configured dataset."""
    if not config.data.path:
        raise ConfigError("no dataset configured (set data.path or pass --data)")
    manager = DataManager(config.data.path, config.data.schema())
    return manager.prepare(
        fraction=config.data.split,
        seed=config.training.seed,
        stratify=config.data.stratify,
        standardize_features=config.data.standardize,
    )


@dataclass(frozen=True)
class ModelBundle:
    """A loaded model plus the training context saved alongside it."""

    model: DekModel
    schema: CsvSchema
    reference: Dataset
    standardization: Optional[Standardization]


def bundle_metadata(config: ExperimentConfig, train_set: Dataset) -> dict:
    return {
        'schema': config.data.schema().model_dump(mode="json"),
        'feature_names': list(train_set.feature_names),
        'label_names': list(train_set.label_names),
        'standardization': None if train_set.standardization is None else train_set.standardization.to_dict(),
        'reference': {
            'features': train_set.features.tolist(),
            'target': train_set.target.tolist(),
            'row_ids': train_set.row_ids.tolist(),
        },
        'config_hash': config.config_hash(),
        'seed': config.training.seed,
    }


def load_bundle(path: Union[str, Path]) -> ModelBundle:
    model, metadata = load_model(path)
    if 'reference' not in metadata or 'schema' not in metadata:
        raise ConfigError(f"model file {path} carries no training reference set")
    schema = CsvSchema.model_validate(metadata['schema'])
    stats = metadata.get('standardization')
    standardization = None if stats is None else Standardization.from_dict(stats)
    reference = Dataset(
        features=np.array(metadata['reference']['features'], dtype=np.float64).reshape(-1, model.input_dim),
        target=np.array(metadata['reference']['target']),
        task=model.task,
        feature_names=tuple(metadata.get('feature_names', ())),
        label_names=tuple(metadata.get('label_names', ())),
        row_ids=metadata['reference'].get('row_ids'),
        standardization=standardization,
    )
    return ModelBundle(model=model, schema=schema, reference=reference, standardization=standardization)


def load_for_bundle(bundle: ModelBundle, path: Union[str, Path]) -> Dataset:
    """Read a file with the bundle's schema and label dictionary and apply its standardization."""
    label_names = bundle.reference.label_names if bundle.model.task is Task.CLASSIFICATION else None
    data = load_csv(path, bundle.schema, label_names=label_names)
    if bundle.standardization is not None:
        data = replace(data, features=bundle.standardization.apply(data.features), standardization=bundle.standardization)
    return data


def run_train(config: ExperimentConfig, progress: Optional[ProgressSink] = None) -> ExperimentReport:
    """Train a DEK on the training split; write the model file and loss history."""
    started = _now()
    train_set, _ = prepare_data(config)
    arch = config.architecture
    model = build_model(
        input_dim=train_set.n_features,
        task=train_set.task,
        width_factor=arch.width_factor,
        embedding_layers=arch.embedding_layers,
        kernel_layers=arch.kernel_layers,
        hidden_activation=arch.hidden_activation,
        seed=config.training.seed,
    )
    paths = config.run_path()
    paths.ensure_run_dir()
    metadata = bundle_metadata(config, train_set)
    try:
        model, history = train(model, train_set, config.training, progress)
    except TrainingDivergedError as exc:
        if exc.model is not None:
            save_model(paths.model_file(), exc.model, metadata)
            write_loss_history(paths.loss_history_file(), exc.history)
            logger.error("Training diverged; last finite model saved to %s", paths.model_file())
        raise

    model_path = save_model(paths.model_file(), model, metadata)
    history_path = write_loss_history(paths.loss_history_file(), history)
    metrics = {
        'train_samples': len(train_set),
        'epochs': len(history),
        'first_loss': history[0],
        'final_loss': history[-1],
    }
    return _finish("train", config, started, metrics, {'model': model_path, 'loss_history': history_path})


def _evaluation_set(bundle: ModelBundle, config: ExperimentConfig, test_path: Optional[str]) -> Dataset:
    if test_path:
        return load_for_bundle(bundle, test_path)
    _, test_set = prepare_data(config)
    return test_set


def run_eval(config: ExperimentConfig, model_path: Union[str, Path], test_path: Optional[str] = None) -> ExperimentReport:
    """
    Score a trained model on a test set with the configured consumer (KNN or
    SVM over the DEK Gram) and, for classification, export the averaged
    precision-recall curve of the test-vs-reference ranking.
    """
    started = _now()
    bundle = load_bundle(model_path)
    test_set = _evaluation_set(bundle, config, test_path)
    reference = bundle.reference
    consumer = config.consumer
    cross = gram(bundle.model, test_set.features, reference.features)
    paths = config.run_path()
    paths.ensure_run_dir()
    artifacts: dict[str, Any] = {}
    metrics: dict[str, Any] = {'consumer': consumer.kind, 'test_samples': len(test_set)}

    if bundle.model.task is Task.REGRESSION:
        if consumer.kind != "knn":
            raise ConfigError("regression models are evaluated with the knn consumer")
        predictions = knn_predict(cross, reference.target, min(consumer.k, len(reference)), regression=True,
                                  weighted=consumer.weighted)
        metrics['k'] = consumer.k
        metrics['r2'] = metric_r2(predictions, test_set.target)
    else:
        if consumer.kind == "knn":
            predictions = knn_predict(cross, reference.target, min(consumer.k, len(reference)))
            metrics['k'] = consumer.k
        else:
            machine = svm_fit(gram(bundle.model, reference.features), reference.target, C=consumer.C,
                              tol=consumer.tol, max_passes=consumer.max_passes, seed=config.training.seed)
            predictions = svm_predict(machine, cross)
            metrics['C'] = consumer.C
        metrics['accuracy'] = metric_accuracy(predictions, test_set.target)
        curve = rank_and_pr_curve(cross, test_set.target, reference.target)
        metrics['pr_skipped_queries'] = curve.skipped_queries
        artifacts['pr_curve'] = write_pr_curve(paths.pr_curve_file(), curve)

    return _finish("eval", config, started, metrics, artifacts)


def run_gram(config: ExperimentConfig, model_path: Union[str, Path], data_path: Optional[str] = None) -> ExperimentReport:
    """
    Export a Gram matrix: rows are the samples of ``data_path`` (or the
    training reference set), columns the training reference set.
    """
    started = _now()
    bundle = load_bundle(model_path)
    rows = bundle.reference if data_path is None else load_for_bundle(bundle, data_path)
    matrix = gram(bundle.model, rows.features, bundle.reference.features)
    path = write_gram(config.run_path().gram_file(), matrix)
    metrics = {'rows': matrix.shape[0], 'columns': matrix.shape[1], 'symmetric': matrix.symmetric_flag}
    return _finish("gram", config, started, metrics, {'gram': path})


def _kpca_grams(bundle: ModelBundle, rows: Dataset, rbf_gamma: Optional[float]) -> tuple[GramMatrix, GramMatrix]:
    reference = bundle.reference.features
    if rbf_gamma is not None:
        return rbf_kernel(reference, gamma=rbf_gamma), rbf_kernel(rows.features, reference, rbf_gamma)
    return gram(bundle.model, reference), gram(bundle.model, rows.features, reference)


def run_kpca(
    config: ExperimentConfig,
    model_path: Union[str, Path],
    data_path: Optional[str] = None,
    out_path: Optional[str] = None,
    rbf_gamma: Optional[float] = None,
) -> ExperimentReport:
    """
    Fit kernel PCA on the training reference Gram matrix and project
    ``data_path`` (or the reference set). With ``rbf_gamma`` the RBF kernel
    replaces the DEK, giving the baseline projection.
    """
    started = _now()
    bundle = load_bundle(model_path)
    rows = bundle.reference if data_path is None else load_for_bundle(bundle, data_path)
    training_gram, cross = _kpca_grams(bundle, rows, rbf_gamma)
    fitted = kpca_fit(training_gram, config.consumer.components)
    coordinates = kpca_project(fitted, cross)
    path = write_kpca_coordinates(out_path or config.run_path().kpca_file(), coordinates, rows.row_ids)

    metrics: dict[str, Any] = {
        'kernel': 'rbf' if rbf_gamma is not None else 'dek',
        'components': fitted.n_components,
        'eigenvalues': [float(value) for value in fitted.eigenvalues],
    }
    if rows.task is Task.CLASSIFICATION:
        try:
            metrics['silhouette'] = metric_silhouette(coordinates, rows.target)
        except DegenerateTargetError:
            logger.warning("Silhouette skipped: projected set has a single class")
    return _finish("kpca", config, started, metrics, {'coordinates': path})


def run_pairs(config: ExperimentConfig, model_path: Optional[Union[str, Path]] = None) -> ExperimentReport:
    """
    Dump the training pairs the configured pairing produces on the training
    split. Local pairing ranks with ``model_path`` when given, otherwise with a
    freshly initialised model.
    """
    started = _now()
    train_set, _ = prepare_data(config)
    if model_path is not None:
        model = load_bundle(model_path).model
    else:
        arch = config.architecture
        model = build_model(train_set.n_features, train_set.task, arch.width_factor, arch.embedding_layers,
                            arch.kernel_layers, arch.hidden_activation, seed=config.training.seed)
    training = config.training
    batch = initial_pairs(model, train_set, training)
    path = write_pairs(config.run_path().pairs_file(), batch)
    metrics = {
        'pairing': training.pairing,
        'pairs': len(batch),
        'positive_fraction': float(np.mean(batch.targets)) if train_set.task is Task.CLASSIFICATION else None,
    }
    return _finish("pairs", config, started, metrics, {'pairs': path})


def run_baseline_rbf(config: ExperimentConfig) -> ExperimentReport:
    """
    Grid-search the RBF kernel on the training split, then score SVM/RBF
    (classification) or KNN/RBF (regression) on the test split.
    """
    started = _now()
    train_set, test_set = prepare_data(config)
    baseline = config.baseline
    search = rbf_grid_search(train_set, baseline.gamma_grid, baseline.C_grid, baseline.folds,
                             seed=config.training.seed, k=config.consumer.k, tol=config.consumer.tol)
    cross = rbf_kernel(test_set.features, train_set.features, search.gamma)
    metrics: dict[str, Any] = {'gamma': search.gamma, 'cv_score': search.score, 'skipped_folds': search.skipped_folds}
    if train_set.task is Task.CLASSIFICATION:
        machine = svm_fit(rbf_kernel(train_set.features, gamma=search.gamma), train_set.target, C=search.C,
                          tol=config.consumer.tol, max_passes=config.consumer.max_passes, seed=config.training.seed)
        metrics['C'] = search.C
        metrics['accuracy'] = metric_accuracy(svm_predict(machine, cross), test_set.target)
    else:
        predictions = knn_predict(cross, train_set.target, min(config.consumer.k, len(train_set)), regression=True)
        metrics['k'] = config.consumer.k
        metrics['r2'] = metric_r2(predictions, test_set.target)
    return _finish("baseline-rbf", config, started, metrics, {})


def run_baseline(config: ExperimentConfig) -> ExperimentReport:
    """Score gradient boosting, random forest and MLP models on the test split."""
    started = _now()
    train_set, test_set = prepare_data(config)
    scores = fit_baselines(train_set, test_set, config.baseline.models, seed=config.training.seed)
    metric = 'accuracy' if train_set.task is Task.CLASSIFICATION else 'r2'
    metrics: dict[str, Any] = {f"{kind}_{metric}": score for kind, score in scores.items()}
    return _finish("baseline", config, started, metrics, {})


def summarize_reports(paths: Sequence[Union[str, Path]]) -> pd.DataFrame:
    """One row per report file: command, seed, config hash and every metric."""
    rows = []
    for path in paths:
        try:
            report = ExperimentReport.model_validate_json(Path(path).read_text(encoding='utf-8'))
        except (OSError, ValidationError) as exc:
            raise ConfigError(f"cannot read report {path}: {exc}") from exc
        scalar_metrics = {key: value for key, value in report.metrics.items() if not isinstance(value, (list, dict))}
        rows.append({'report': str(path), 'command': report.command, 'seed': report.seed,
                     'config_hash': report.config_hash, **scalar_metrics})
    return pd.DataFrame(rows)
