"""Exception types raised across the package."""


class MRPError(Exception):
    """Base class for all package errors."""


class ValidationError(MRPError, ValueError):
    """Invalid parameters, configuration or file contents."""


class TailUnderflow(MRPError, FloatingPointError):
    """Survival 1 - F(s) is below the safe floor; use the frozen-tail closure."""


class SamplerFailure(MRPError, RuntimeError):
    pass


class ThinningBoundViolated(MRPError, RuntimeError):
    pass


class StabilityViolation(MRPError, ValueError):
    """Grid step too coarse for the explicit characteristic scheme."""


class QRangeTooSmall(MRPError, RuntimeError):
    pass


class QRangeExceeded(MRPError, IndexError):
    pass


class OutOfGrid(MRPError, IndexError):
    pass


class PolicyUndefined(MRPError, RuntimeError):
    pass


class InsufficientData(MRPError, ValueError):
    pass


class OptimizerNotConverged(MRPError, RuntimeError):
    """MLE optimizer failed; carries the best iterate and its gradient norm."""

    def __init__(self, message, best_x=None, grad_norm=None):
        super().__init__(message)
        self.best_x = best_x
        self.grad_norm = grad_norm


class MissingArtifact(MRPError, FileNotFoundError):
    pass
