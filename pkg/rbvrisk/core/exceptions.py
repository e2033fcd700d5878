"""Exception hierarchy for rbvrisk."""

from typing import Optional


class RBVRiskError(Exception):
    """Base class for all rbvrisk errors."""


class InputError(RBVRiskError, ValueError):
    """Invalid input data, file, column, label or parameter."""


class StageError(RBVRiskError):
    """A pipeline stage failed."""

    def __init__(self, stage: str, cause: Optional[BaseException] = None):
        self.stage = stage
        self.cause = cause
        message = f"stage '{stage}' failed"
        if cause is not None:
            message += f": {cause}"
        super().__init__(message)
