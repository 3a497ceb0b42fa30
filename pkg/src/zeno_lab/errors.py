"""Exception and warning types shared across zeno_lab."""


class ContractViolation(ValueError):
    """An operation was called with arguments outside its contract."""


class NumericError(ArithmeticError):
    """Non-finite values reached a numerical kernel."""


class ConfigurationError(ValueError):
    """A model, detector or experiment configuration is invalid."""


class HorizonError(RuntimeError):
    """Amplitude reached the edge of the simulation grid.

    Raised instead of silently absorbing norm, since the grid extents are
    sized so that this cannot happen within the configured horizon.
    """


class ConfigurationWarning(UserWarning):
    """A configuration is usable but likely to give poor results."""
