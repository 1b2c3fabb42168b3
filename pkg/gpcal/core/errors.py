"""
Exception hierarchy and process exit codes.

Every failure raised by gpcal carries the exit code the CLI returns for it
and a details dict with diagnostics (field names, ψ, spacing, file/line).

Version: 1.0.0
"""

from enum import IntEnum
from typing import Any


class ExitCode(IntEnum):
    """Process exit codes of the gpcal CLI"""

    SUCCESS = 0
    CONFIG_ERROR = 2
    NUMERICAL_FAILURE = 3
    IO_FAILURE = 4


class GpcalError(Exception):
    """Base class for all gpcal failures."""

    exit_code: ExitCode = ExitCode.NUMERICAL_FAILURE

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: dict[str, Any] = details

    def __str__(self) -> str:
        if not self.details:
            return self.message
        extra = ", ".join(f"{key}={value}" for key, value in self.details.items())
        return f"{self.message} ({extra})"


class ConfigurationError(GpcalError):
    """Invalid run configuration or model setup"""

    exit_code = ExitCode.CONFIG_ERROR


class InputError(GpcalError, ValueError):
    """Invalid numerical input such as non-finite or empty locations"""

    exit_code = ExitCode.CONFIG_ERROR


class SingularityError(GpcalError):
    """
    A covariance matrix could not be factorized, even after jitter escalation.

    Details carry the correlation length and support spacing in force when
    the factorization failed.
    """


class ModelEvaluationError(GpcalError):
    """The forward model failed to evaluate at a parameter vector"""


class InitializationError(GpcalError):
    """No chain could be started at a finite log-density"""


class DiagnosticError(GpcalError):
    """Not enough samples or chains to compute a diagnostic"""


class DataFileError(GpcalError):
    """Malformed or unreadable data, archive or config file"""

    exit_code = ExitCode.IO_FAILURE
