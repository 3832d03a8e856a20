"""Exception types shared across the library."""


class ShapeMismatch(ValueError):
    """A tensor argument has an incompatible shape; message names the offending dimension."""


class NumericalError(ArithmeticError):
    """An operation produced non-finite values (raised only when debug checks are on)."""

    def __init__(self, op, message):
        super().__init__(message)
        self.op = op


class TapeError(RuntimeError):
    """backward() was called on a tensor with no recorded operations."""


class TrainingDiverged(RuntimeError):
    """The training loss became non-finite; message names the first bad op."""


class DataError(RuntimeError):
    """Missing or malformed dataset / checkpoint files (CLI exit code 2)."""
