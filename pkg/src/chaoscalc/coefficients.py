"""Uniform wrappers for deterministic coefficient functions.

Problem specifications accept coefficients as constants, grid tables or
callables.  :func:`time_function` and :func:`jump_function` turn any of these
into vectorised callables ``f(t)`` and ``g(t, atom_index)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .chaos_core.grid import TimeGrid

__all__ = ["TimeFunction", "JumpFunction", "time_function", "jump_function"]


@dataclass(frozen=True)
class TimeFunction:
    fn: Callable[[np.ndarray], np.ndarray]
    constant: float | None = None

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.constant is not None:
            return np.full(t.shape, self.constant)
        return np.asarray(self.fn(t), dtype=float) * np.ones(t.shape)

    @property
    def is_zero(self) -> bool:
        return self.constant == 0.0


@dataclass(frozen=True)
class JumpFunction:
    """g(t, j) for atom index j; ``zetas`` gives the mark of each atom."""

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    zetas: tuple
    constant: float | None = None

    def __call__(self, t, j):
        t = np.asarray(t, dtype=float)
        j = np.asarray(j, dtype=np.int64)
        shape = np.broadcast(t, j).shape
        if self.constant is not None:
            return np.full(shape, self.constant)
        return np.asarray(self.fn(t, j), dtype=float) * np.ones(shape)

    def atom_columns(self, t) -> np.ndarray:
        """Values for every atom: shape ``t.shape + (n_atoms,)``."""
        t = np.asarray(t, dtype=float)
        n = len(self.zetas)
        return self(t[..., None], np.arange(n).reshape((1,) * t.ndim + (n,)))

    @property
    def is_zero(self) -> bool:
        return self.constant == 0.0 or len(self.zetas) == 0


def time_function(x, grid: TimeGrid | None = None) -> TimeFunction:
    """Constant, grid table (length M+1, linear interpolation) or callable."""
    if isinstance(x, TimeFunction):
        return x
    if x is None:
        return TimeFunction(lambda t: 0.0, 0.0)
    if np.isscalar(x):
        return TimeFunction(lambda t: x, float(x))
    if callable(x):
        return TimeFunction(x)
    arr = np.asarray(x, dtype=float)
    if grid is None or arr.shape != (len(grid),):
        raise ValueError(f"tabulated coefficient needs {len(grid) if grid else '?'} grid values, got {arr.shape}")
    pts = grid.points
    return TimeFunction(lambda t: np.interp(t, pts, arr))


def jump_function(x, zetas, grid: TimeGrid | None = None) -> JumpFunction:
    """Constant, per-atom list, (M+1, n_atoms) table, or callable(t, zeta)."""
    zetas = tuple(float(z) for z in zetas)
    if isinstance(x, JumpFunction):
        return x
    if x is None:
        return JumpFunction(lambda t, j: 0.0, zetas, 0.0)
    if np.isscalar(x):
        return JumpFunction(lambda t, j: x, zetas, float(x))
    if callable(x):
        z = np.asarray(zetas)
        return JumpFunction(lambda t, j: x(t, z[j]), zetas)
    arr = np.asarray(x, dtype=float)
    if arr.shape == (len(zetas),):
        return JumpFunction(lambda t, j: arr[j] * np.ones_like(t), zetas)
    if grid is not None and arr.shape == (len(grid), len(zetas)):
        pts = grid.points

        def table(t, j):
            t, j = np.broadcast_arrays(np.asarray(t, float), np.asarray(j))
            out = np.empty(t.shape)
            for a in range(len(zetas)):
                m = j == a
                out[m] = np.interp(t[m], pts, arr[:, a])
            return out
        return JumpFunction(table, zetas)
    raise ValueError(f"jump coefficient has shape {arr.shape}; expected ({len(zetas)},) or (M+1, {len(zetas)})")
