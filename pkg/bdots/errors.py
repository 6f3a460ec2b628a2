"""Exceptions raised by bdots.

Every error carries an ``exit_code`` and a ``detail`` string. Library code only
raises; ``bdots.main`` turns them into process exit codes.
"""
from typing import Optional


class BdotsError(Exception):
    """Base class for all bdots errors."""

    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# --- Input / configuration (exit 2) ---

class InputError(BdotsError, ValueError):
    exit_code = 2


class MalformedInput(InputError):
    """Raised for unreadable or inconsistent CSV / JSON input."""

    def __init__(self, detail: str, row: Optional[int] = None):
        if row is not None:
            detail = f"row {row}: {detail}"
        super().__init__(detail)
        self.row = row


class UnknownScenario(InputError):
    pass


class UnknownCurve(InputError):
    pass


class ConfigurationError(InputError):
    pass


# --- Analysis outcomes with dedicated exit codes ---

class NoConvergence(BdotsError):
    exit_code = 3


class UnpairedSubject(BdotsError, ValueError):
    exit_code = 4


class ZeroVariance(BdotsError, ArithmeticError):
    exit_code = 5


# --- Numerical errors ---

class DegenerateParams(BdotsError, ValueError):
    """Curve parameters outside the family's domain (e.g. logistic peak == baseline)."""

    def __init__(self, detail: str, subject_index: Optional[int] = None):
        if subject_index is not None:
            detail = f"subject {subject_index}: {detail}"
        super().__init__(detail)
        self.subject_index = subject_index


class SingularJacobian(BdotsError):
    pass


class InsufficientData(BdotsError, ValueError):
    pass


class PlanShapeMismatch(BdotsError, ValueError):
    pass


class SeriesTooShort(BdotsError, ValueError):
    pass


class NoRoot(BdotsError, ArithmeticError):
    pass


class NonPSDCovariance(BdotsError, ValueError):
    pass


class InvalidArgument(InputError):
    """Raised for out-of-range counts, levels, and similar arguments."""
