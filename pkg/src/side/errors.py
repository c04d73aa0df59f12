"""Exception hierarchy shared by every module of the package."""


class SideError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SideError, ValueError):
    pass


class DegenerateError(SideError, ValueError):
    """A row or vector whose norm is at or below the normalization floor."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class TapeError(SideError, RuntimeError):
    """Misuse of a gradient tape: non-scalar loss, stale tape, foreign node."""


class DeterminismError(SideError, RuntimeError):
    pass


class ConfigError(SideError, ValueError):
    pass


class DatasetFormatError(SideError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(SideError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, term=None):
        super().__init__(message)
        self.epoch = epoch
        self.term = term
