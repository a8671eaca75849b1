"""Exception types raised by the solver."""


class PlapError(Exception):
    """Base class for all solver errors."""


class InvalidArgument(PlapError, ValueError):
    pass


class InvalidInput(PlapError, ValueError):
    """A sampled field produced a non-finite value."""


class UnsupportedExponent(PlapError, ValueError):
    pass


class NotPositiveDefinite(PlapError, ArithmeticError):
    pass


class MissingHistory(PlapError, LookupError):
    pass


class InadmissibleStep(PlapError, ValueError):
    """The time step makes the discrete Volterra solve ill-posed."""

    def __init__(self, message, *, delta, g0, bound=None):
        super().__init__(message)
        self.delta = delta
        self.g0 = g0
        self.bound = bound


class NonConvergence(PlapError, RuntimeError):
    def __init__(self, message, *, increment, iterations, level=None):
        super().__init__(message)
        self.increment = increment
        self.iterations = iterations
        self.level = level


class ConfigError(PlapError, ValueError):
    pass
