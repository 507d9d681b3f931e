"""Exception hierarchy shared by all modules.

The CLI maps :class:`ConfigError` to exit code 2 and every
:class:`NumericalError` to exit code 3.
"""


class KPOError(Exception):
    """Base class for package errors."""


class ConfigError(KPOError, ValueError):
    """Invalid parameters or experiment configuration."""


class NumericalError(KPOError, ArithmeticError):
    """A computation produced an unusable result."""


class IntegrationError(NumericalError):
    """Classical trajectory left the finite / bounded region."""


class ConvergenceError(NumericalError):
    pass


class NormDriftError(NumericalError):
    """Schroedinger evolution lost too much norm (truncation or step size)."""


class ConsistencyError(NumericalError):
    """A quantity that must be real came out with a sizeable imaginary part."""


class ParityMixingError(NumericalError):
    """An eigenvector is not (numerically) a parity eigenstate."""


class FitError(NumericalError):
    pass
