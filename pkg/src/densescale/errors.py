"""Exception hierarchy shared by all modules."""


class DenseScaleError(Exception):
    """Base class for all library errors."""


class ParameterError(DenseScaleError, ValueError):
    """Invalid numeric parameter or argument combination."""


class StateError(DenseScaleError):
    """Operation applied twice where it must be applied once (compensation, calibration, post-smoothing)."""


class KindError(DenseScaleError, TypeError):
    """A volume of the wrong domain kind was passed."""


class UnsupportedError(DenseScaleError):
    """Requested combination is not defined (e.g. phase compensation for time-causal volumes)."""


class FormatError(DenseScaleError):
    """Malformed input file. ``offset`` is a byte offset or line number, as stated in the message."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class NoRootError(DenseScaleError, ArithmeticError):
    """A calibration equation has no sign change in its search bracket."""
