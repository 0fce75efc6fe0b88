"""Exception hierarchy for calmreg.

Every error raised by the library derives from :class:`CalmregError`. The
concrete classes also inherit from the closest builtin so callers that only
know about ``ValueError`` or ``ArithmeticError`` keep working.
"""

from typing import List, Optional


class CalmregError(Exception):
    """Base class for all calmreg errors."""


class ValidationError(CalmregError, ValueError):
    """Input failed a structural check (shape, symmetry, definiteness)."""

    def __init__(self, message: str, check: Optional[str] = None):
        self.check = check
        super().__init__(f"{check}: {message}" if check else message)


class ConfigError(ValidationError):
    """Bad configuration key or value."""


class DomainError(CalmregError, ValueError):
    """Argument lies outside the domain of the operation."""


class ConditionsUnmetError(DomainError):
    """The inequalities a bound is conditioned on do not hold."""

    def __init__(self, failed: List[str]):
        self.failed = list(failed)
        super().__init__("calming conditions unmet: " + "; ".join(self.failed))


class RangeError(CalmregError, OverflowError):
    """Exponent too large to evaluate in double precision."""


class NumericalError(CalmregError, ArithmeticError):
    """Singular system, non-finite objective or solver failure."""


class NoCrossoverError(NumericalError):
    """The crossover equation has no sign change on the search bracket."""


__all__ = [
    "CalmregError",
    "ValidationError",
    "ConfigError",
    "DomainError",
    "ConditionsUnmetError",
    "RangeError",
    "NumericalError",
    "NoCrossoverError",
]
