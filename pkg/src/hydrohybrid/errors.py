"""Exception hierarchy shared by all modules.

Each family maps onto one CLI exit code (see :mod:`hydrohybrid.cli`).
"""

from __future__ import annotations


class HydroHybridError(Exception):
    """Base class for all package errors."""


class ValidationError(HydroHybridError, ValueError):
    """Invalid parameters, configuration, or gain constraints."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class NumericError(HydroHybridError, ArithmeticError):
    """A numerical kernel failed (non-convergence, singularity, no crossing)."""


class SingularityError(NumericError):
    pass


class NoCrossingError(NumericError):
    pass


class UncontrollableError(NumericError):
    """(A, b) pair whose controllability matrix is rank deficient."""

    def __init__(self, message: str, rank: int, n: int, deficient_state: str | None = None):
        self.rank = rank
        self.n = n
        self.deficient_state = deficient_state
        super().__init__(message)


class IntegrationError(HydroHybridError, RuntimeError):
    """Time integration produced a non-finite state.

    ``log`` carries the partial trajectory when raised from a simulation run.
    """

    def __init__(self, message: str, t: float, index: int, log=None):
        self.t = t
        self.index = index
        self.log = log
        super().__init__(f"{message} (t={t:.6g} s, component {index})")


class PressureLimitError(HydroHybridError, ValueError):
    """Load pressure reached or exceeded the supply pressure."""
