"""Exception types shared across the package."""


class IncdmdError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(IncdmdError):
    """Input violates a precondition (non-finite values, bad scalar range)."""


class ShapeError(IncdmdError):
    """Array dimensions are inconsistent with the operation."""


class DriftTooLarge(IncdmdError):
    """Orthogonality drift exceeds the repairable threshold; rebuild from data."""


class WindowSizeMismatch(IncdmdError):
    """Windowed initialization needs exactly one window of columns."""


class ModeError(IncdmdError):
    """Operation called on a state in the wrong streaming mode."""


class BufferUnderflow(IncdmdError):
    """Window ring buffer does not hold enough columns."""


class BufferOverflow(IncdmdError):
    """Window ring buffer is already full."""


class MissingRightFactors(IncdmdError):
    """Operation needs the right singular vectors but the state dropped them."""


class ConditioningError(IncdmdError):
    """Update is numerically unsafe; caller should rebuild from raw data."""


class DegenerateData(IncdmdError):
    """Data matrix carries no usable singular values."""


class NumericalError(IncdmdError):
    """A dense solver failed to converge."""


class MissingState(IncdmdError):
    """No model snapshot is available for the requested step."""


class DegenerateRange(IncdmdError):
    """Normalization denominator is zero (constant reference channel)."""


class ParseError(IncdmdError):
    """Malformed dataset file; message carries row/column coordinates."""
