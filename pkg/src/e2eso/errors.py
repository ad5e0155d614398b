"""Exception hierarchy shared by all modules.

CLI exit codes are attached to the classes so the front end can map
failures without a lookup table.
"""


class E2ESOError(Exception):
    exit_code = 1


class ConfigError(E2ESOError, ValueError):
    """Invalid configuration (bad step size, unknown strategy, ...)."""

    exit_code = 2


class DomainError(E2ESOError, ValueError):
    """Argument outside the domain of an operation."""

    exit_code = 2


class ShapeError(DomainError):
    """Input of the wrong dimension."""


class StaleTapeError(E2ESOError, RuntimeError):
    """A forward tape was reused after the network was mutated."""


class DataError(E2ESOError, OSError):
    """Missing or malformed input data."""

    exit_code = 3


class DivergenceError(E2ESOError, FloatingPointError):
    """Training produced a non-finite or exploding loss."""

    exit_code = 4

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
