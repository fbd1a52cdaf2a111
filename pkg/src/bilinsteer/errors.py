"""Exception hierarchy shared by all modules."""


class BilinSteerError(Exception):
    """Base class for every error raised by the package."""


class InvalidGridError(BilinSteerError, ValueError):
    pass


class DimensionError(BilinSteerError, ValueError):
    """Fields or masks living on different grids were combined."""


class DomainError(BilinSteerError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class ScheduleError(BilinSteerError, ValueError):
    """A control schedule does not cover the simulation interval."""


class BlowUpError(BilinSteerError, FloatingPointError):
    def __init__(self, step, time):
        super().__init__(f"non-finite state at step {step} (t={time:.6g})")
        self.step = step
        self.time = time


class SolverError(BilinSteerError, RuntimeError):
    pass


class ContractError(BilinSteerError, ValueError):
    """An operation was called with an input that violates its contract."""


class HypothesisViolation(BilinSteerError, ValueError):
    """Input data violates a hypothesis of the construction (e.g. h >= 0)."""


class SynthesisError(BilinSteerError, ValueError):
    """Control synthesis refused an inadmissible (y0, yd) pair."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InsufficientDataError(BilinSteerError, ValueError):
    pass


class ConfigError(BilinSteerError, ValueError):
    pass
