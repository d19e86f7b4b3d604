"""Exception and warning classes raised across the package."""


class CoupledARError(Exception):
    """Base class for all package errors."""


class InvalidHyperparameterError(CoupledARError, ValueError):
    pass


class DimensionMismatchError(CoupledARError, ValueError):
    pass


class InvalidPanelError(CoupledARError, ValueError):
    pass


class IntensityExplosionError(CoupledARError, FloatingPointError):
    """A Poisson intensity exceeded the configured cap during simulation."""

    def __init__(self, series, step, intensity, cap):
        self.series = series
        self.step = step
        self.intensity = intensity
        self.cap = cap
        super().__init__(
            f"intensity {intensity:.6g} exceeds cap {cap:.6g} for {series} at step {step}"
        )


class ConvergenceError(CoupledARError, RuntimeError):
    pass


class InvalidMeansError(CoupledARError, ValueError):
    """Stationary means outside the region where the correlation approximation is defined."""


class LoadError(CoupledARError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class StationarityWarning(UserWarning):
    pass


class IntervalViolationWarning(UserWarning):
    pass
