"""
Exception hierarchy for the thermodynamic-formalism toolkit
Every failure raised by services derives from ThermoError so the CLI can map it to an exit status
"""

from typing import List, Optional, Sequence


class ThermoError(Exception):
    """Base class for all toolkit errors"""

    pass


class ArgumentError(ThermoError, ValueError):
    """Raised when an operation precondition is violated"""

    pass


class NumericError(ThermoError, ArithmeticError):
    """Raised when an iterative solver fails to converge"""

    def __init__(
        self,
        message: str,
        residual: Optional[float] = None,
        history: Optional[Sequence[float]] = None,
    ):
        self.residual = residual
        self.history: List[float] = list(history or [])
        if residual is not None:
            message = f"{message} (residual={residual:.3e})"
        super().__init__(message)


class InternalConsistencyError(ThermoError):
    """Raised when a computed object violates an identity the theory guarantees"""

    pass


class PropertyCheckError(ThermoError, AssertionError):
    """Raised when a property audit finds a violation"""

    pass


class VariationalPrincipleError(PropertyCheckError):
    """Raised when an admissible candidate beats the pressure"""

    pass


class ConfigValidationError(ThermoError, ValueError):
    """Raised when an experiment document fails validation"""

    def __init__(self, diagnostics: Sequence[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics) or "invalid configuration")
