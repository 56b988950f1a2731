"""Exception types shared across the package."""


class StclustError(Exception):
    """Base class for all package errors."""


class BadMagicError(StclustError):
    """File does not start with the expected magic value."""


class TruncatedFileError(StclustError):
    """File payload is shorter than its header promises."""


class ObjectLeavesFrameError(StclustError):
    """Synthetic object would exit the frame before the last frame."""


class NonPositiveBandwidthError(StclustError):
    """Temporal kernel bandwidth must be > 0."""


class DimensionMismatchError(StclustError):
    """Operand shapes are inconsistent."""


class FeatureDimOverflowError(StclustError):
    """Requested feature dimensionality exceeds the supported bound."""


class SingularGramError(StclustError):
    """Unregularized Gram matrix is numerically singular."""


class CollapsedSolutionError(StclustError):
    """Iteration produced a (near-)zero vector that cannot be normalized."""


class BadInitFileError(StclustError):
    """Initial-label file is missing, malformed, or has the wrong size."""


class TooLargeError(StclustError):
    """Instance exceeds the dense-oracle size cap."""


class ZeroBaselineError(StclustError):
    """Relative change is undefined for a zero baseline."""


class ShapeMismatchError(StclustError):
    """Imported tensor has an unexpected shape."""


class NetworkFailedError(StclustError):
    """External network invocation failed (exit code, timeout, or bad output)."""
