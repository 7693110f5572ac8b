"""Exception types raised across the package."""


class DDUError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(DDUError, ValueError):
    pass


class EmptyInput(DDUError, ValueError):
    pass


class DomainError(DDUError, ValueError):
    pass


class ZeroMatrix(DDUError, ValueError):
    pass


class ShapeMismatch(DDUError, ValueError):
    pass


class LengthMismatch(DDUError, ValueError):
    pass


class InvalidCount(DDUError, ValueError):
    pass


class InvalidRate(DDUError, ValueError):
    pass


class ExhaustedSampling(DDUError, RuntimeError):
    pass


class DivergedLoss(DDUError, FloatingPointError):
    pass


class ClassUnderpopulated(DDUError, ValueError):
    def __init__(self, label, count=None):
        self.label = label
        self.count = count
        msg = f"class {label} has fewer than 2 samples"
        if count is not None:
            msg += f" (got {count})"
        super().__init__(msg)


class InvalidDistribution(DDUError, ValueError):
    pass


class EmptyValidation(DDUError, ValueError):
    pass


class PreconditionViolated(DDUError, ValueError):
    pass


class IndexOutOfRange(DDUError, IndexError):
    pass


class IndexConflict(DDUError, ValueError):
    pass


class InfeasibleMI(DDUError, ValueError):
    pass


class Diverged(DDUError, FloatingPointError):
    pass


class DegenerateComponent(DDUError, RuntimeError):
    pass


class PoolExhausted(DDUError, RuntimeError):
    pass


class MissingGda(DDUError, ValueError):
    pass


class ConfigError(DDUError, ValueError):
    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message)


class UnknownExperiment(DDUError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""
