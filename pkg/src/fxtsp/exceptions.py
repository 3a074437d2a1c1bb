"""Custom exceptions for the fxtsp package.

Every error carries the process exit code the command line maps it to.
"""

from __future__ import annotations

from typing import Any


class FxtspError(Exception):
    """Base exception for all fxtsp errors."""

    exit_code: int = 1


class InvalidParameterError(FxtspError):
    """Raised when a scalar or matrix parameter is outside its admissible range."""


class ShapeError(FxtspError):
    """Raised when an argument's dimensions do not match the model."""


class DomainError(FxtspError):
    """Raised when a function is evaluated outside its domain."""


class PreconditionError(FxtspError):
    """Raised when an operation's precondition does not hold."""


class CapabilityError(FxtspError):
    """Raised when an evaluator required by an operation was not supplied."""


class ConfigError(FxtspError):
    """Raised when a run configuration or environment setting is malformed."""


class CertificateInfeasibleError(FxtspError):
    """Raised when no composite certificate exists for the given inputs."""

    exit_code = 2


class InadmissibleQError(CertificateInfeasibleError):
    """Raised when q violates the admissibility condition 1/alpha_lower(q) < eta."""

    def __init__(self, message: str, minimal_q: float) -> None:
        super().__init__(message)
        self.minimal_q = minimal_q


class IntegrationError(FxtspError):
    """Base exception for integration failures."""

    exit_code = 3

    def __init__(self, message: str, time: float, state: Any = None) -> None:
        super().__init__(message)
        self.time = time
        self.state = state


class StiffnessError(IntegrationError):
    """Raised when the step size collapses or the solver gives up."""


class DivergenceError(IntegrationError):
    """Raised when the state becomes NaN or overflows."""


class OracleViolationError(FxtspError):
    """Raised when a randomized oracle finds a violating sample."""

    exit_code = 4
