"""Exception types shared across the package."""


class FairPolicyError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FairPolicyError, ValueError):
    """Invalid hyperparameters, dimensions or experiment settings."""


class ShapeError(FairPolicyError, ValueError):
    """Array shapes do not match what an operation expects."""


class NumericalError(FairPolicyError, ArithmeticError):
    """Non-finite values appeared in a loss, likelihood or gradient."""


class ContractError(FairPolicyError, ValueError):
    """An operation was called on inputs violating its preconditions."""


class DomainError(FairPolicyError, ValueError):
    """A distribution parameter lies outside its valid domain."""


class RangeError(FairPolicyError, IndexError):
    """A time index or window lies outside the available history."""


class ParseError(FairPolicyError, ValueError):
    """A data file could not be parsed against its schema."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
