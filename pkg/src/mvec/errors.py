"""Exception types shared across the toolkit.

Every error raised by the library derives from :class:`MvecError`, so the
command-line layer can turn any expected failure into a one-line message
and a nonzero exit code while genuine bugs still surface as tracebacks.
"""


class MvecError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MvecError):
    """Shape or length mismatch between operands."""


class DegenerateInputError(MvecError):
    """An input is numerically unusable (zero vector where a direction is needed)."""


class EmptyInputError(MvecError):
    """An operation received an empty batch, list, or score set."""


class LabelError(MvecError):
    """A class label is outside the valid range."""


class ConfigError(MvecError):
    """Invalid configuration: unknown keys, malformed values, or inconsistent sections."""


class IdLookupError(MvecError):
    """An utterance or vector id was not found where required."""


class DuplicateIdError(MvecError):
    """An id was ingested twice into the same store."""


class BoundsError(MvecError):
    """A count or index argument is out of range (e.g. k larger than the store)."""


class FormatError(MvecError):
    """A binary or text artifact does not match its documented layout."""


class GenerationError(MvecError):
    """Synthetic data or trial generation cannot satisfy the request."""


class TrainingDivergedError(MvecError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")
