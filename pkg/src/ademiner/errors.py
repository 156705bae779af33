"""Exception types shared across the package."""


class AdeMinerError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(AdeMinerError, ValueError):
    """Tensor or feature dimensions do not agree."""


class ConfigurationError(AdeMinerError, ValueError):
    """Invalid hyperparameter, flag, or component combination."""


class EmptySequenceError(AdeMinerError, ValueError):
    """An operation that needs at least one element received none."""


class NumericError(AdeMinerError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class LabelError(AdeMinerError, ValueError):
    """Class or tag label outside the expected set or range."""


class DataFormatError(AdeMinerError, ValueError):
    """Malformed input file; carries a line number when one is known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SpanAlignmentError(DataFormatError):
    """Character-offset span does not align with token boundaries."""


class SpanError(AdeMinerError, ValueError):
    """Entity span violates its invariants or cannot be encoded."""


class ConsistencyError(AdeMinerError, ValueError):
    """Supposedly-consistent inputs disagree (e.g. positives outside the candidate set)."""


class DependencyStructureError(AdeMinerError, ValueError):
    """Dependency heads do not form a single-rooted acyclic forest."""


class TrainingError(AdeMinerError, RuntimeError):
    """Training cannot proceed (empty corpus, single-class data, ...)."""


class EvaluationError(AdeMinerError, ValueError):
    """Evaluation asked for labels or predictions that are missing."""


class BundleError(AdeMinerError, RuntimeError):
    """Model bundle cannot be read: unknown format, version, or stage kind."""


class BundleCorruptionError(BundleError):
    """Model bundle failed its integrity checks (truncation, checksum)."""
