"""Exception hierarchy shared by all modules.

The CLI maps ConfigError to exit code 2 and NumericalError to exit code 3.
"""


class SemiwaveError(Exception):
    pass


class InvalidInputError(SemiwaveError, ValueError):
    """Non-finite or out-of-type input."""


class DomainError(SemiwaveError, ValueError):
    """A mathematical precondition does not hold."""


class NoRealRootError(DomainError):
    pass


class InfeasibleError(DomainError):
    pass


class ModelError(DomainError):
    """Birth function without the required fixed-point structure."""


class ConfigError(SemiwaveError):
    """Bad run configuration (grid, CFL, file syntax)."""

    def __init__(self, message, lineno=None):
        super().__init__(message if lineno is None else f"line {lineno}: {message}")
        self.lineno = lineno


class NumericalError(SemiwaveError, RuntimeError):
    """A simulation left its admissible range (blow-up guard, non-convergence)."""

    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time
