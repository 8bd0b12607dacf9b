class ExtremesError(Exception):
    """Base class for every error raised by the extremes package."""


class ParameterError(ExtremesError, ValueError):
    pass


class DomainError(ExtremesError, ValueError):
    pass


class ConvergenceError(ExtremesError, RuntimeError):
    pass


class TailError(ExtremesError, RuntimeError):
    pass


class PreconditionError(ExtremesError, ValueError):
    pass


class ClosureError(ExtremesError, ValueError):
    pass


class ConfigError(ExtremesError, ValueError):
    pass


class SupportError(ExtremesError, ValueError):
    """
    Raised when an observation lies outside the support of a model.

    Parameters:
    index (int): Position of the first offending observation.
    value (float): The offending observation.
    support (tuple): Support interval of the model.
    """

    def __init__(self, index, value, support):
        self.index = int(index)
        self.value = float(value)
        self.support = support
        super().__init__(
            f"Observation at row {self.index} ({self.value!r}) lies outside the model support {support}"
        )
