"""
Exception hierarchy for the DEK toolkit.

Every error carries a short machine-readable ``code`` so the command line and
the JSON service can report failures in a parseable form.
"""
import json
from typing import Any, Optional


class DekError(Exception):
    """Base class for all toolkit failures."""

    code = "DEK_ERROR"
    exit_code = 1

    def as_line(self) -> str:
        """Render the error as a single machine-parseable line."""
        return f"error code={self.code} message={json.dumps(str(self))}"

    def as_payload(self) -> dict:
        return {'success': False, 'error': str(self), 'code': self.code}


class ShapeMismatchError(DekError, ValueError):
    """Array dimensions do not chain or do not match the model."""

    code = "SHAPE_MISMATCH"

    def __init__(self, message: str, layer: Optional[int] = None):
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)
        self.layer = layer


class NonFiniteError(DekError, ValueError):
    code = "NON_FINITE"


class EmptyBatchError(DekError, ValueError):
    code = "EMPTY_BATCH"


class InsufficientSamplesError(DekError, ValueError):
    code = "INSUFFICIENT_SAMPLES"


class TaskMismatchError(DekError, ValueError):
    code = "TASK_MISMATCH"


class TrainingDivergedError(DekError):
    """
    Raised when the loss or a gradient becomes non-finite.

    Attributes:
        model: The last model whose parameters were all finite.
        history: Per-epoch mean losses completed before the failure.
    """

    code = "TRAINING_DIVERGED"

    def __init__(self, message: str, model: Any = None, history: Optional[list] = None):
        super().__init__(message)
        self.model = model
        self.history = list(history or [])


class NoVarianceError(DekError, ValueError):
    code = "NO_VARIANCE"


class DegenerateTargetError(DekError, ValueError):
    code = "DEGENERATE_TARGET"


class DataLoadError(DekError):
    code = "DATA_LOAD"


class ConfigError(DekError):
    code = "CONFIG"
    exit_code = 2


class ModelFormatError(DekError):
    code = "MODEL_FORMAT"
