"""
Exception hierarchy shared by every service.
Each error carries the process exit status the CLI reports for it.
"""

from typing import List, Optional, Sequence


class SpadeError(Exception):
    """Base class for all toolkit errors."""

    exit_code: int = 1


class DatasetLoadError(SpadeError):
    """A dataset or artifact file is missing or unreadable."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path


class DataValidationError(SpadeError):
    """Input data violates a structural invariant."""


class DimensionError(SpadeError):
    """Array shapes do not agree."""


class ParameterError(SpadeError):
    """A parameter lies outside its admissible range."""


class MissingEdgeError(SpadeError):
    """An undirected edge expected in the graph is absent."""

    def __init__(self, p: int, q: int):
        super().__init__(f"edge ({p}, {q}) not present in graph")
        self.pair = (p, q)


class NumericError(SpadeError):
    """Non-finite values appeared in a computation."""

    exit_code = 2


class ConvergenceError(SpadeError):
    """An iterative solver hit its iteration cap."""

    exit_code = 2

    def __init__(self, message: str, residual_history: Sequence[float] = ()):
        super().__init__(message)
        self.residual_history: List[float] = list(residual_history)


class PhaseError(SpadeError):
    """A pipeline phase failed; wraps the underlying error."""

    def __init__(self, phase: str, cause: BaseException):
        super().__init__(f"phase '{phase}' failed: {cause}")
        self.phase = phase
        self.cause = cause
        # pydantic's ValidationError is a ValueError
        default = 1 if isinstance(cause, (ValueError, FileNotFoundError)) else 2
        self.exit_code = getattr(cause, "exit_code", default)
