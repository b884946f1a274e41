"""Exception hierarchy shared across the package.

Every failure mode that callers are expected to handle gets its own class so
tests and the CLI can match on type rather than message text.
"""


class ImpressError(Exception):
    """Base class for all package-specific errors."""


class InvalidShape(ImpressError):
    """A tensor shape is empty, non-positive, or otherwise malformed."""


class ShapeMismatch(ImpressError):
    """Operand shapes are incompatible (matmul inner dims, broadcasting)."""


class MissingGradient(ImpressError):
    """An optimizer step was requested but some parameter has no gradient."""


class NonFinite(ImpressError):
    """A NaN or infinity appeared where only finite values are allowed."""


class GeometryMismatch(ImpressError):
    """Points with different curvatures or dimensions were combined."""


class BoundaryPoint(ImpressError):
    """A point sits on or outside the open ball where a map is undefined."""


class ParamError(ImpressError):
    """A scalar hyperparameter is outside its legal range."""


class ParseError(ImpressError):
    """A data file line could not be parsed; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RangeError(ImpressError):
    """A node or class id is outside the valid range."""


class SplitError(ImpressError):
    """Class split sets are inconsistent with the labels present."""


class SizeError(ImpressError):
    """A requested structure exceeds the desk-scale size cap."""


class EpisodeInfeasible(ImpressError):
    """The split cannot supply the requested N-way M-shot episode."""


class ScheduleError(ImpressError):
    """Invalid diffusion schedule parameters."""


class StepError(ImpressError):
    """A diffusion step index is outside [1, K]."""


class TrainingDiverged(ImpressError):
    """Training produced a non-finite loss; carries the epoch index."""

    def __init__(self, message: str, epoch: int | None = None):
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
        self.epoch = epoch


class ModelNotTrained(ImpressError):
    """Sampling was requested from a model that never saw a training step."""


class EmptyClass(ImpressError):
    """A class or cluster group that must be non-empty is empty."""


class LabelError(ImpressError):
    """Generated sample blocks do not line up with the support classes."""


class DiagnosticUnavailable(ImpressError):
    """A diagnostic needs at least two classes."""


class IoError(ImpressError):
    """Reading or writing an artifact failed."""


class FormatError(ImpressError):
    """A checkpoint or report file is structurally corrupt."""


class VersionError(ImpressError):
    """A checkpoint was written by an incompatible format version."""
