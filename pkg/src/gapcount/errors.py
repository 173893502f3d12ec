"""Exception hierarchy.

The CLI maps ``InputError`` / ``ConfigError`` / ``DomainError`` /
``RankError`` to exit code 1 and ``EstimationError`` to exit code 2.
"""


class GapCountError(Exception):
    """Base class for all package errors."""


class InputError(GapCountError, ValueError):
    """Malformed score row, dump record or matrix."""


class DomainError(GapCountError, ValueError):
    """Argument outside the domain of an operation (negative t, beta <= 0, ...)."""


class ConfigError(GapCountError, ValueError):
    """Invalid synthetic-family or schedule configuration."""


class RankError(GapCountError, ValueError):
    """Gram matrix rank exceeds the requested key/query dimension."""


class EstimationError(GapCountError, RuntimeError):
    """Not enough data to fit an exponent or run a bootstrap."""
