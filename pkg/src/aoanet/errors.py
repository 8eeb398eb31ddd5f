"""Exception types shared across the package.

Each error maps onto one CLI exit code (see :mod:`aoanet.cli`).
"""


class AoAError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DomainError(AoAError, ValueError):
    """An argument is outside the mathematical domain of the operation."""

    exit_code = 4


class DegenerateInputError(DomainError):
    """Input is valid in shape but numerically degenerate (e.g. zero norm)."""


class ConfigurationError(AoAError, ValueError):
    """Invalid or inconsistent configuration (shapes, kinds, flags)."""

    exit_code = 2


class UnsupportedError(AoAError, NotImplementedError):
    """Requested a feature outside the supported envelope."""

    exit_code = 2


class DataError(AoAError, IOError):
    """Missing, malformed or incompatible files."""

    exit_code = 3
