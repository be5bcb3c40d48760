"""Exception hierarchy shared by every module.

Each class carries the process exit code used by the command-line tool.
"""


class CLMDLError(Exception):
    exit_code = 1


class InputError(CLMDLError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 1


class DomainError(InputError):
    """A value lies outside the domain where it is defined."""


class CompletenessError(InputError):
    """The station x time panel has missing cells."""

    def __init__(self, message, gaps=()):
        super().__init__(message)
        self.gaps = list(gaps)


class NumericError(CLMDLError, ArithmeticError):
    exit_code = 2


class DefinitenessError(NumericError):
    """A covariance matrix that must be positive definite is not."""


class FitError(NumericError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConditioningError(NumericError):
    def __init__(self, message, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues


class ConfigError(CLMDLError):
    exit_code = 3


class BudgetExceeded(ConfigError):
    """Refusal to run a computation larger than its configured budget."""


class CostError(NumericError):
    """Every candidate model failed to fit a segment."""
