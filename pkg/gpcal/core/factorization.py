"""
Guarded symmetric positive-definite factorization.

Responsibilities:
- Cholesky-factorize covariance and correlation matrices
- Escalate a diagonal jitter when the factorization fails
- Raise SingularityError with diagnostics once the jitter ceiling is reached
- Solve against a factor (explicit inverses are never formed)

Jitter schedule: none, then 1e-10·scale, escalating ×10 up to 1e-4·scale.

Version: 1.0.0
"""

import logging

import numpy as np
from numpy.linalg import LinAlgError
from scipy.linalg import cho_factor, cho_solve
from tenacity import Retrying, before_sleep_log, retry_if_exception_type, stop_after_attempt

from gpcal.core.errors import SingularityError

logger = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_MAX = 1e-4

Factor = tuple[np.ndarray, bool]


def jitter_levels(scale: float) -> list[float]:
    """Diagonal jitter tried in turn: zero first, then 1e-10·scale … 1e-4·scale."""
    exponents = range(int(np.log10(JITTER_START)), int(np.log10(JITTER_MAX)) + 1)
    return [0.0, *(scale * 10.0**p for p in exponents)]


def guarded_cholesky(matrix: np.ndarray, scale: float, **diagnostics) -> Factor:
    """
    Cholesky factor of a symmetric matrix with jitter escalation.

    Args:
        matrix: Symmetric matrix expected to be positive definite
        scale: Magnitude the jitter is relative to (usually σ²_d, 1 for correlations)
        **diagnostics: Context attached to the SingularityError (psi, spacing, ...)

    Returns:
        Lower Cholesky factor in scipy's (c, lower) form

    Raises:
        SingularityError: If every jitter level fails
    """
    matrix = np.asarray(matrix, dtype=float)
    levels = jitter_levels(scale)
    identity = np.eye(matrix.shape[0])

    try:
        for attempt in Retrying(
            stop=stop_after_attempt(len(levels)),
            retry=retry_if_exception_type(LinAlgError),
            before_sleep=before_sleep_log(logger, logging.DEBUG),
            reraise=True,
        ):
            with attempt:
                jitter = levels[attempt.retry_state.attempt_number - 1]
                factor = cho_factor(matrix + jitter * identity, lower=True)
                if jitter > 0.0:
                    logger.debug(f"Cholesky succeeded with jitter={jitter:.3e}")
                return factor
    except (LinAlgError, ValueError) as e:
        raise SingularityError(
            "Matrix is numerically singular after jitter escalation",
            size=matrix.shape[0],
            max_jitter=levels[-1],
            **diagnostics,
        ) from e

    raise SingularityError("Factorization produced no result", **diagnostics)  # pragma: no cover


def solve(factor: Factor, rhs: np.ndarray) -> np.ndarray:
    """Solve A x = rhs given the Cholesky factor of A."""
    return cho_solve(factor, rhs)


def lower_triangle(factor: Factor) -> np.ndarray:
    """Explicit lower-triangular L with A = L Lᵀ."""
    c, _ = factor
    return np.tril(c)
