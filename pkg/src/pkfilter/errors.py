"""Exception types raised by the filters, the loss and the optimizer."""


class PkFilterError(Exception):
    """Base class for all package errors."""


class DomainError(PkFilterError, ValueError):
    """A model function was evaluated outside its domain (K_m + q <= 0, sigma <= 0)."""


class StepError(PkFilterError):
    """A filter step failed; ``step`` is the 1-based observation index when known."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class SingularInnovationError(StepError, ArithmeticError):
    """The EKF innovation variance F is not positive."""


class DegenerateWeightsError(StepError, ArithmeticError):
    """Every particle weight vanished during a reweighting step."""


class LossEvaluationError(PkFilterError):
    """The loss could not be evaluated at ``theta`` because the filter failed."""

    def __init__(self, theta, cause: Exception):
        self.theta = theta
        self.cause = cause
        super().__init__(f"loss undefined at {theta}: {cause}")


class UndefinedECError(PkFilterError, ZeroDivisionError):
    """A population quantile used as EC denominator is zero."""


class OptimizationFailedError(PkFilterError):
    """No candidate in a generation had finite fitness."""


class StepDomainError(StepError, DomainError):
    """A DomainError raised inside a filter recursion, tagged with its step."""
