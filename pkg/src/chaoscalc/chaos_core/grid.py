"""Uniform time grids and the quadrature rules attached to them."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import newton_cotes

__all__ = ["TimeGrid", "newton_cotes_weights"]


def newton_cotes_weights(M: int, h: float) -> np.ndarray:
    """Composite closed Newton-Cotes weights for ``M`` uniform intervals.

    Panels of four intervals (Boole's rule) are used throughout; when ``M`` is
    not a multiple of four the last panel absorbs the remainder and becomes a
    5-, 6- or 7-interval rule.  All of these rules have positive weights, so the
    composite rule is stable, and it integrates quintic pieces exactly.
    """
    if M < 1:
        raise ValueError("need at least one interval")
    w = np.zeros(M + 1)
    if M < 4:
        panels = [M]
    else:
        q, r = divmod(M, 4)
        panels = [4] * q
        if r:
            panels[-1] += r
    start = 0
    for n in panels:
        an, _ = newton_cotes(n, 1)
        w[start:start + n + 1] += an * h
        start += n
    return w


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_M = T``."""

    T: float
    M: int
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.T > 0):
            raise ValueError(f"horizon must be positive, got {self.T}")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"need M >= 2 intervals, got {self.M}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "T", float(self.T))
        pts = np.linspace(0.0, self.T, self.M + 1)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def dt(self) -> float:
        return self.T / self.M

    def __len__(self) -> int:
        return self.M + 1

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """High-order weights for ``∫_0^T f`` from grid samples of a smooth ``f``."""
        w = newton_cotes_weights(self.M, self.dt)
        w.setflags(write=False)
        return w

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.M + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        w.setflags(write=False)
        return w

    def index(self, t: float, tol: float = 1e-9) -> int:
        """Index of grid point ``t``; raises if ``t`` is not (close to) a node."""
        x = t / self.dt
        i = int(round(x))
        if i < 0 or i > self.M or abs(x - i) > tol * max(1.0, self.M):
            raise ValueError(f"t={t} is not a grid point of {self}")
        return i

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T, self.M * factor)

    def tail_trapezoid(self, values: np.ndarray) -> np.ndarray:
        """``∫_{t_i}^T f`` for every ``i`` by the trapezoid rule (shape ``(M+1,)``)."""
        v = np.asarray(values, dtype=float)
        inc = 0.5 * self.dt * (v[..., 1:] + v[..., :-1])
        out = np.zeros_like(v)
        out[..., :-1] = np.cumsum(inc[..., ::-1], axis=-1)[..., ::-1]
        return out

    def cumulative_integral(self, fn, nodes: int = 8) -> np.ndarray:
        """``∫_0^{t_i} fn`` at every grid point, Gauss-Legendre on each cell.

        ``fn`` maps an array of times to values; trailing axes are allowed
        (e.g. one column per jump atom), giving shape ``(M+1, ...)``.
        """
        x, w = np.polynomial.legendre.leggauss(nodes)
        a = self.points[:-1]
        s = (a[:, None] + 0.5 * self.dt * (x[None, :] + 1.0)).ravel()
        v = np.asarray(fn(s), dtype=float)
        if v.ndim == 0:
            v = np.full(len(s), float(v))
        v = v.reshape((self.M, nodes) + v.shape[1:])
        cell = 0.5 * self.dt * np.tensordot(w, v, axes=([0], [1]))
        out = np.zeros((self.M + 1,) + cell.shape[1:])
        out[1:] = np.cumsum(cell, axis=0)
        return out

    def antiderivative(self, fn, nodes: int = 8):
        """Callable ``A(s) = ∫_0^s fn`` for arbitrary ``s`` in [0, T].

        Grid values come from :meth:`cumulative_integral`; between nodes a
        Gauss-Legendre rule on ``[t_c, s]`` is added, so piecewise-smooth
        coefficients with kinks at grid points are integrated accurately.
        """
        cum = self.cumulative_integral(fn, nodes)
        x, w = np.polynomial.legendre.leggauss(nodes)
        pts, M = self.points, self.M

        def A(s):
            s = np.asarray(s, dtype=float)
            c = np.clip(np.searchsorted(pts, s, side="right") - 1, 0, M - 1)
            a = pts[c]
            half = 0.5 * (s - a)
            q = a[..., None] + half[..., None] * (x + 1.0)
            v = np.asarray(fn(q.ravel()), dtype=float)
            if v.ndim == 0:
                v = np.full(q.size, float(v))
            v = v.reshape(q.shape + v.shape[1:])
            part = half.reshape(half.shape + (1,) * (v.ndim - q.ndim)) * np.tensordot(v, w, axes=([q.ndim - 1], [0])) \
                if v.ndim > q.ndim else half * (v @ w)
            return cum[c] + part

        return A

    def to_dict(self) -> dict:
        return {"T": self.T, "M": self.M}
