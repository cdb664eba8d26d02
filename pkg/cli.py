"""
Command-line entry point: ``python cli.py <command> [options]``.

Every command reads an optional JSON config, applies the command-line
overrides, runs, and prints its metrics as ``key=value`` pairs. Failures print
one ``error code=<CODE> message=<json>`` line on stderr and exit nonzero
(2 for usage and configuration errors).
"""
import glob
import json
import logging
import sys
from typing import Any, Optional

import click
from tqdm import tqdm

from scripts.env_utils import configure_logging
from scripts.errors import DekError
from scripts.experiment import (
    ExperimentConfig,
    ExperimentReport,
    apply_overrides,
    load_config,
    run_baseline,
    run_baseline_rbf,
    run_eval,
    run_gram,
    run_kpca,
    run_pairs,
    run_train,
    summarize_reports,
)

logger = logging.getLogger(__name__)


class DekGroup(click.Group):
    """Click group that renders every failure as a single parseable line."""

    def main(self, *args: Any, **kwargs: Any):
        kwargs['standalone_mode'] = False
        try:
            return super().main(*args, **kwargs)
        except click.exceptions.Exit as exc:
            sys.exit(exc.exit_code)
        except click.Abort:
            click.echo("error code=ABORTED message=\"aborted\"", err=True)
            sys.exit(1)
        except click.UsageError as exc:
            if exc.ctx is not None:
                click.echo(exc.ctx.get_usage(), err=True)
            click.echo(f"error code=USAGE message={json.dumps(exc.format_message())}", err=True)
            sys.exit(2)
        except click.ClickException as exc:
            click.echo(f"error code=CLI message={json.dumps(exc.format_message())}", err=True)
            sys.exit(exc.exit_code)
        except DekError as exc:
            click.echo(exc.as_line(), err=True)
            sys.exit(exc.exit_code)
        except Exception as exc:
            logger.debug("Unhandled failure", exc_info=True)
            click.echo(f"error code=INTERNAL message={json.dumps(str(exc) or repr(exc))}", err=True)
            sys.exit(1)


def common_options(func):
    """Options every command accepts."""
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False), help="JSON experiment config."),
        click.option('--seed', type=int, help="Seed for splitting, initialisation and shuffling."),
        click.option('--out-dir', type=click.Path(file_okay=False), help="Root directory for run artifacts."),
        click.option('--log-level', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False)),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def data_options(func):
    options = [
        click.option('--data', type=click.Path(dir_okay=False), help="Delimited dataset file."),
        click.option('--target-col', help="Target column name (or index for header-less files)."),
        click.option('--task', type=click.Choice(['classification', 'regression'])),
        click.option('--split', type=float, help="Training fraction in (0, 1)."),
        click.option('--standardize/--no-standardize', default=None,
                     help="Z-score features with training-split statistics (on by default)."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _target_column(value: Optional[str]):
    if value is not None and value.isdigit():
        return int(value)
    return value


def _prepare(config_path: Optional[str], log_level: Optional[str], **overrides: Any) -> ExperimentConfig:
    configure_logging(log_level)
    if 'target_col' in overrides:
        overrides['target_col'] = _target_column(overrides['target_col'])
    return apply_overrides(load_config(config_path), **overrides)


def _emit(report: ExperimentReport) -> None:
    click.echo(f"{report.command} {report.metric_line()}")
    for name, path in report.artifacts.items():
        click.echo(f"  {name}: {path}")


def _tqdm_progress(total: int):
    # created on the first epoch, once the data has loaded
    bar = None

    def sink(epoch: int, mean_loss: float) -> None:
        nonlocal bar
        if bar is None:
            bar = tqdm(total=total, desc="epochs", unit="epoch", leave=False)
        bar.update(1)
        bar.set_postfix(loss=f"{mean_loss:.5f}")
        if epoch == total:
            bar.close()

    return sink


@click.group(cls=DekGroup)
def cli():
    """Deep Embedding Kernel toolkit."""


@cli.command()
@common_options
@data_options
@click.option('--pairing', type=click.Choice(['full', 'local']))
@click.option('--recall-level', type=float)
@click.option('--pairing-interval', type=int)
@click.option('--gamma', type=float, help="Regression pair-target bandwidth.")
def train(config_path, log_level, **overrides):
    """Train a DEK and write the model file and loss history."""
    config = _prepare(config_path, log_level, **overrides)
    _emit(run_train(config, progress=_tqdm_progress(config.training.epochs)))


@cli.command(name='eval')
@common_options
@data_options
@click.option('--model', 'model_path', required=True, type=click.Path(dir_okay=False))
@click.option('--test', 'test_path', type=click.Path(dir_okay=False), help="Score this file instead of the test split.")
@click.option('--consumer', type=click.Choice(['knn', 'svm']))
@click.option('--k', type=int)
def evaluate(config_path, log_level, model_path, test_path, **overrides):
    """Score a trained model with a KNN or SVM consumer."""
    config = _prepare(config_path, log_level, **overrides)
    _emit(run_eval(config, model_path, test_path))


@cli.command()
@common_options
@click.option('--model', 'model_path', required=True, type=click.Path(dir_okay=False))
@click.option('--data', 'data_path', type=click.Path(dir_okay=False), help="Rows of the Gram matrix (default: reference set).")
def gram(config_path, log_level, model_path, data_path, **overrides):
    """Export the Gram matrix of a sample set against the training reference set."""
    config = _prepare(config_path, log_level, **overrides)
    _emit(run_gram(config, model_path, data_path))


@cli.command()
@common_options
@click.option('--model', 'model_path', required=True, type=click.Path(dir_okay=False))
@click.option('--data', 'data_path', type=click.Path(dir_okay=False), help="Samples to project (default: reference set).")
@click.option('--components', type=int)
@click.option('--gamma', 'rbf_gamma', type=float, help="Use the RBF kernel with this gamma instead of the DEK.")
@click.option('--out', '--output', 'out_path', type=click.Path(dir_okay=False))
def kpca(config_path, log_level, model_path, data_path, rbf_gamma, out_path, **overrides):
    """Project samples with kernel PCA over the training reference Gram matrix."""
    config = _prepare(config_path, log_level, **overrides)
    _emit(run_kpca(config, model_path, data_path, out_path, rbf_gamma))


@cli.command()
@common_options
@data_options
@click.option('--model', 'model_path', type=click.Path(dir_okay=False), help="Rank local pairs with this model.")
@click.option('--pairing', type=click.Choice(['full', 'local']))
@click.option('--recall-level', type=float)
@click.option('--gamma', type=float)
def pairs(config_path, log_level, model_path, **overrides):
    """Dump the training pairs of the training split."""
    config = _prepare(config_path, log_level, **overrides)
    _emit(run_pairs(config, model_path))


@cli.command(name='baseline-rbf')
@common_options
@data_options
@click.option('--k', type=int)
def baseline_rbf(config_path, log_level, **overrides):
    """Grid-searched RBF baseline (SVM for classification, KNN for regression)."""
    config = _prepare(config_path, log_level, **overrides)
    _emit(run_baseline_rbf(config))


@cli.command()
@common_options
@data_options
@click.option('--model-kind', 'models', type=click.Choice(['gb', 'rf', 'mlp']), multiple=True,
              help="Repeat to pick models (default: all three).")
def baseline(config_path, log_level, models, **overrides):
    """Gradient boosting, random forest and MLP scores on the test split."""
    config = _prepare(config_path, log_level, models=list(models) or None, **overrides)
    _emit(run_baseline(config))


@cli.command()
@click.argument('reports', nargs=-1)
@click.option('--log-level', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False))
def report(reports, log_level):
    """Tabulate report files (glob patterns allowed)."""
    configure_logging(log_level)
    paths = sorted({path for pattern in reports for path in (glob.glob(pattern) or [pattern])})
    if not paths:
        raise click.UsageError("no report files given")
    click.echo(summarize_reports(paths).to_string(index=False))


@cli.command()
@click.option('--model', 'model_path', required=True, type=click.Path(dir_okay=False))
@click.option('--host', default='127.0.0.1')
@click.option('--port', default=5000, type=int)
@click.option('--log-level', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False))
def serve(model_path, host, port, log_level):
    """Serve a model file over the JSON API."""
    configure_logging(log_level)
    from app import app, model_store
    app.config['MODEL_PATH'] = model_path
    model_store.refresh()
    app.run(host=host, port=port)


if __name__ == "__main__":
    cli()
