"""Exception and warning types shared across the package."""


class SubsetRelaxError(ValueError):
    """Base class for invalid-input errors raised by this package."""


class WeightsError(SubsetRelaxError):
    pass


class EnumerationLimitError(SubsetRelaxError):
    pass


class DivergenceError(RuntimeError):
    """Raised when a training loop produces a non-finite loss."""

    def __init__(self, step, message="non-finite loss"):
        super().__init__(f"{message} at step {step}")
        self.step = step


class SaturationWarning(UserWarning):
    """A step probability rounded to 1; derivatives through it underflow to zero."""
