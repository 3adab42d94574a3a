"""
distreg-quantlet command line.

Each subcommand loads the run configuration, takes the output directory
lock and runs one pipeline stage (or every stage for `all`).
"""
import logging
import sys
from pathlib import Path
from typing import Optional, Tuple

import click

from distreg import __version__
from distreg.config import Settings, load_settings
from distreg.data.artifacts import ArtifactStore
from distreg.exceptions import DependencyMissingError, OutputLockedError, PipelineError
from distreg.schemas.manifest import ErrorReport
from distreg.services.pipeline import Pipeline
from distreg.utils.logging import configure_logging

logger = logging.getLogger(__name__)


def error_report(subcommand: str, error: Exception) -> ErrorReport:
    exit_code = error.exit_code if isinstance(error, PipelineError) else 1
    return ErrorReport(
        subcommand=subcommand,
        error=type(error).__name__,
        message=str(error),
        exit_code=exit_code,
        artifact=error.artifact if isinstance(error, DependencyMissingError) else None,
    )


def fail(subcommand: str, error: Exception, store: Optional[ArtifactStore] = None) -> None:
    """Write the error report to stderr (and the output directory) and exit."""
    report = error_report(subcommand, error)
    if store is not None:
        store.write_error_report(report)
    click.echo(report.model_dump_json(), err=True)
    sys.exit(report.exit_code)


def run_subcommand(subcommand: str, config: Optional[str], overrides: Tuple[str, ...]) -> None:
    try:
        settings: Settings = load_settings(Path(config) if config else None, overrides)
    except PipelineError as e:
        configure_logging()
        logger.error(f"Configuration failed: {e}")
        fail(subcommand, e)

    configure_logging(settings.log_level)
    store = ArtifactStore(settings.paths.output_dir)
    try:
        with store.lock():
            store.clear_error_report()
            Pipeline(settings, store).run(subcommand)
    except PipelineError as e:
        logger.error(f"{subcommand} failed: {e}", extra={"subcommand": subcommand, "exit_code": e.exit_code})
        fail(subcommand, e, None if isinstance(e, OutputLockedError) else store)
    except Exception as e:
        logger.error(f"{subcommand} failed unexpectedly: {e}", exc_info=True)
        fail(subcommand, e, store)
    click.echo(f"{subcommand} complete: {settings.paths.output_dir}")


def pipeline_options(func):
    func = click.option(
        "--set", "overrides", multiple=True, metavar="KEY=VALUE",
        help="Override a config key, e.g. --set model.mcmc.keep=500",
    )(func)
    func = click.option(
        "--config", "-c", type=click.Path(exists=False, dir_okay=False),
        help="Path to a TOML run configuration",
    )(func)
    return func


@click.group()
@click.version_option(__version__, prog_name="distreg-quantlet")
def cli():
    """Quantile functional regression for accelerometer activity distributions."""
    pass


@cli.command()
@pipeline_options
def preprocess(config: Optional[str], overrides: Tuple[str, ...]):
    """Non-wear rule, validity filters, quantile functions and missingness profiles."""
    run_subcommand("preprocess", config, overrides)


@cli.command()
@pipeline_options
def basis(config: Optional[str], overrides: Tuple[str, ...]):
    """Missingness FPC basis and quantlet basis."""
    run_subcommand("basis", config, overrides)


@cli.command()
@pipeline_options
def fit(config: Optional[str], overrides: Tuple[str, ...]):
    """Gibbs sampling of the quantlet-space mixed models."""
    run_subcommand("fit", config, overrides)


@cli.command()
@pipeline_options
def infer(config: Optional[str], overrides: Tuple[str, ...]):
    """Monotone projection, summaries, bands and residual covariance."""
    run_subcommand("infer", config, overrides)


@cli.command()
@pipeline_options
def simulate(config: Optional[str], overrides: Tuple[str, ...]):
    """Write a synthetic corpus in the epoch CSV schema."""
    run_subcommand("simulate", config, overrides)


@cli.command()
@pipeline_options
def evaluate(config: Optional[str], overrides: Tuple[str, ...]):
    """Simulation study: ISE and mean bias per method and cell."""
    run_subcommand("evaluate", config, overrides)


@cli.command()
@pipeline_options
def report(config: Optional[str], overrides: Tuple[str, ...]):
    """Contrast surfaces, what-if bundles and evaluation tables."""
    run_subcommand("report", config, overrides)


@cli.command(name="all")
@pipeline_options
def run_all(config: Optional[str], overrides: Tuple[str, ...]):
    """Run preprocess, basis, fit, infer, evaluate and report in order."""
    run_subcommand("all", config, overrides)


if __name__ == "__main__":
    cli()
