"""Exception types shared across the package."""


class ImgkError(Exception):
    """Base class for all package errors."""


class ValidationError(ImgkError, ValueError):
    """Input violates a documented invariant or precondition."""


class KembError(ImgkError, ValueError):
    """Malformed KEMB file. ``code`` identifies the failure mode.

    Codes: ``bad_magic``, ``bad_version``, ``bad_dtype``, ``truncated``,
    ``size_mismatch``, ``bad_metadata``.
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class ZeroVarianceError(ImgkError, ValueError):
    """Input matrix has numerically zero variance (degenerate upstream data)."""


class SeparationError(ImgkError, RuntimeError):
    """Logistic regression data is perfectly or quasi-perfectly separated."""


class ConvergenceError(ImgkError, RuntimeError):
    """Iterative fit did not converge within its iteration budget."""


class RankDeficiencyError(ImgkError, ValueError):
    """Design matrix is rank deficient. ``column`` names the offender when known."""

    def __init__(self, message: str, column: str | None = None):
        super().__init__(message)
        self.column = column


class InfeasibleSpecError(ImgkError, ValueError):
    """A synthetic-data spec cannot be realized (e.g. centers do not fit)."""


class SchemaError(ImgkError, ValueError):
    """Tabular input does not match the expected schema. ``column`` names the field."""

    def __init__(self, message: str, column: str | None = None):
        super().__init__(message)
        self.column = column


class PipelineStageError(ImgkError, RuntimeError):
    """Failure inside a named pipeline stage; ``cause`` is the original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
