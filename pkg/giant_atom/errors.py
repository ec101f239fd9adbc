"""Exceptions raised by the giant_atom toolkit."""

from typing import Any


class GiantAtomError(Exception):
    """Base class for toolkit errors."""


class NormDriftError(GiantAtomError):
    """The integrator lost normalization beyond the accepted tolerance."""

    def __init__(self, drift: float, t: float):
        super().__init__(f"norm drift {drift:.3e} exceeds tolerance at t={t:.4g}")
        self.drift = drift
        self.t = t


class NoBoundStateError(GiantAtomError):
    """No real root of E - Sigma_e(E) exists in the gap window."""


class OptimizationFailed(GiantAtomError):
    """No feasible coupling sequence was found within the evaluation budget."""


class ConstraintViolationError(GiantAtomError):
    """A coupling sequence violates its physical constraint set."""

    def __init__(self, report: Any):
        failed = ", ".join(report.failures())
        super().__init__(f"sequence violates constraints: {failed}")
        self.report = report


class DocumentError(GiantAtomError):
    """An experiment document could not be read or validated."""
