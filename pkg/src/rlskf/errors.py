"""Exception types shared across the package."""


class RlskfError(Exception):
    """Base class for all errors raised by this package."""


class NonConformal(RlskfError):
    """Dimension mismatch between vectors/matrices."""


class NotSPD(RlskfError):
    """A matrix required to be (semi)definite failed its factorization."""


class DomainError(RlskfError, ValueError):
    """Scalar argument outside its admissible range."""


class SingularZ(RlskfError):
    """Observation matrix is not invertible (required by the IO-robust step)."""


class DegenerateGeometry(RlskfError):
    """Calibration geometry carries no signal (zero covariance)."""


class Infeasible(RlskfError):
    """Calibration target cannot be met for any clipping height."""


class OutOfHorizon(RlskfError):
    """Scenario event time outside the trajectory horizon."""


class EmptyAfterExclusion(RlskfError):
    """All time points were excluded from an MSE computation."""


class EnvelopeTooTight(RlskfError):
    """Rejection-sampling envelope was violated; scale is doubled on retry."""


class ParseError(RlskfError):
    """Malformed scenario/config/model text input."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
