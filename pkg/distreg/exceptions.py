"""
Exception hierarchy for the pipeline.

Every error the CLI reports carries an exit code; services raise the most
specific subclass so callers can tell contract failures apart.
"""
from typing import Optional


class PipelineError(Exception):
    """Base class for errors surfaced by the pipeline."""

    exit_code = 1


class EpochParseError(PipelineError):
    """Malformed or inconsistent epoch CSV input."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"{message} at line {line}"
        super().__init__(message)


class NoValidSubjectsError(PipelineError):
    """Validity filtering removed every subject."""


class ScaleMismatchError(PipelineError):
    """Quantile functions on different scales were combined."""


class NonMonotoneQuantileError(PipelineError):
    """A quantile function that must be non-decreasing is not."""


class BoxCoxFitError(PipelineError):
    """Profile likelihood was not finite anywhere on the lambda grid."""


class QuantletBasisError(PipelineError):
    """The requested LOO concordance could not be reached."""

    def __init__(self, message: str, best_ccc: float):
        self.best_ccc = best_ccc
        super().__init__(message)


class DesignError(PipelineError):
    """Invalid covariates or design vectors."""


class SamplerInputError(PipelineError):
    """Non-finite or misaligned inputs handed to the Gibbs sampler."""


class ProjectionError(PipelineError):
    """Monotone projection did not satisfy its optimality conditions."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (KKT residual {residual:.3e})")


class OutputLockedError(PipelineError):
    """Another process owns the output directory."""


class DependencyMissingError(PipelineError):
    """An upstream artifact required by a subcommand is absent."""

    exit_code = 2

    def __init__(self, artifact: str):
        self.artifact = artifact
        super().__init__(f"dependency missing: {artifact}")


class ConfigError(PipelineError):
    """The run configuration failed to parse or validate."""

    exit_code = 3
