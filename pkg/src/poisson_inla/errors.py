"""Exception hierarchy shared by every module.

Each class carries an ``exit_code`` so the command line front end can map a
failure to a process status without a lookup table.
"""


class InlaError(Exception):
    """Base class for all library errors."""

    exit_code = 3


class ValidationError(InlaError, ValueError):
    exit_code = 2


class NumericalError(InlaError, ArithmeticError):
    exit_code = 3


class DimensionMismatch(ValidationError):
    pass


class InvalidHyper(ValidationError):
    pass


class InvalidVariance(ValidationError):
    pass


class InvalidConfig(ValidationError):
    pass


class ConstantImage(ValidationError):
    pass


class DegenerateRange(ValidationError):
    pass


class NonPositiveRate(ValidationError):
    pass


class MalformedHeader(ValidationError):
    pass


class TruncatedData(MalformedHeader):
    pass


class UnsupportedMagic(MalformedHeader):
    pass


class NotPositiveDefinite(NumericalError):
    def __init__(self, column: int, pivot: float):
        super().__init__(f"non-positive pivot {pivot!r} at column {column}")
        self.column = column
        self.pivot = pivot


class NoConvergence(NumericalError):
    def __init__(self, message: str, theta=None):
        if theta is not None:
            message = f"{message} (theta={tuple(float(t) for t in theta)})"
        super().__init__(message)
        self.theta = theta


class IndefiniteHessian(NumericalError):
    pass


class ExplosionGuard(NumericalError):
    pass


class EmptyPointSet(NumericalError):
    pass


class IoError(InlaError, OSError):
    """Missing, unreadable or unwritable files."""

    exit_code = 4
