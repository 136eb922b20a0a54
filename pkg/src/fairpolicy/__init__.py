"""Online fair decision learning with semi-supervised VAE representations."""
from .errors import (
    ConfigurationError,
    ContractError,
    DomainError,
    FairPolicyError,
    NumericalError,
    ParseError,
    RangeError,
    ShapeError,
)

__version__ = "0.1.0"
