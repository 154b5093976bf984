"""Exception types raised by the toolkit."""


class PlapError(Exception):
    """Base class for every error raised by plap."""


class InvalidInput(PlapError, ValueError):
    pass


class InvalidField(PlapError, ValueError):
    pass


class EmptyGrid(PlapError, ValueError):
    pass


class SegmentCalibrationFailed(PlapError, RuntimeError):
    pass


class DivisionByZeroSignal(PlapError, ZeroDivisionError):
    pass


class DisjointnessViolation(PlapError, ValueError):
    pass


class EigenIterationFailed(PlapError, RuntimeError):
    pass


class GapViolation(PlapError, ValueError):
    """Raised when a level is not strictly below the threshold at infinity."""


class InsufficientDecayData(PlapError, ValueError):
    pass
