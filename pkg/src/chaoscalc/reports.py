"""Structured results returned by the checking routines."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

__all__ = ["CheckReport", "jsonable"]


def jsonable(x: Any):
    """Recursively convert numpy scalars/arrays into JSON-friendly values."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if hasattr(x, "to_dict"):
        return jsonable(x.to_dict())
    return x


@dataclass
class CheckReport:
    """Outcome of an identity check: both sides, the tolerance used, and pass/fail."""

    name: str
    lhs: float
    rhs: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)

    @property
    def deviation(self) -> float:
        return abs(self.lhs - self.rhs)

    def to_dict(self) -> dict:
        return jsonable(asdict(self))
