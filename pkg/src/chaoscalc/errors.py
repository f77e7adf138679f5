"""Exception types shared across the package."""
from __future__ import annotations


class ChaosCalcError(Exception):
    """Base class for all library errors."""


class TruncationError(ChaosCalcError):
    """An operation produced indices beyond the truncation in strict mode."""

    def __init__(self, message: str, dropped_mass: float = 0.0, dropped=None):
        super().__init__(f"{message} (dropped L2 mass {dropped_mass:.3e})")
        self.dropped_mass = dropped_mass
        self.dropped = dropped or []


class BasisInsufficiencyError(ChaosCalcError):
    """A kernel is not representable in the span of e_1..e_K within tolerance."""

    def __init__(self, residual: float, tol: float, order: int | None = None):
        where = f" at order {order}" if order is not None else ""
        super().__init__(f"projection residual {residual:.3e}{where} exceeds tolerance {tol:.1e}")
        self.residual = residual
        self.tol = tol
        self.order = order


class OrderOverflowError(ChaosCalcError):
    def __init__(self, alpha, limit: int):
        super().__init__(f"multi-index {list(alpha)} has order {sum(alpha)} > kernel order {limit}")
        self.alpha = alpha
        self.limit = limit


class UnsupportedError(ChaosCalcError):
    """Input lies outside the family a closed-form routine supports."""


class DomainError(ChaosCalcError, ValueError):
    """Coefficients violate a domain condition (e.g. 1 + η ≤ 0)."""


class IntervalTooLongError(ChaosCalcError):
    def __init__(self, norm: float, delta: float | None):
        where = "" if delta is None else f" on an interval of length {delta:.4g}"
        super().__init__(f"operator norm estimate {norm:.3f} >= 1{where}")
        self.norm = norm
        self.delta = delta


class InfeasibleError(ChaosCalcError):
    """A control candidate is infeasible (e.g. log utility with non-positive adjoint)."""


class ConfigError(ChaosCalcError, ValueError):
    """Malformed or unknown configuration entries."""
