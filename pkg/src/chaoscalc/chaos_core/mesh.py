"""Piecewise Gauss-Legendre meshes used to carry one-dimensional kernel factors."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import TimeGrid

__all__ = ["KernelMesh"]


def _lagrange_row(nodes: np.ndarray, y: float) -> np.ndarray:
    row = np.ones_like(nodes)
    for q in range(len(nodes)):
        for m in range(len(nodes)):
            if m != q:
                row[q] *= (y - nodes[m]) / (nodes[q] - nodes[m])
    return row


@dataclass(frozen=True, eq=False)
class KernelMesh:
    """Cells ``[edges[c], edges[c+1]]`` each holding ``p`` Gauss-Legendre nodes.

    Functions on the mesh are stored as their values at the nodes; they are
    treated as smooth inside each cell and possibly discontinuous across
    edges.  Indicators of edge-aligned intervals are therefore exact.
    """

    edges: np.ndarray
    p: int = 10
    points: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or len(e) < 2 or np.any(np.diff(e) <= 0):
            raise ValueError("edges must be strictly increasing")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)
        x, w = np.polynomial.legendre.leggauss(self.p)
        a, b = e[:-1, None], e[1:, None]
        pts = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
        wts = (0.5 * (b - a) * w).ravel()
        pts.setflags(write=False)
        wts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)
        object.__setattr__(self, "_ref_nodes", x)
        object.__setattr__(self, "_left_row", _lagrange_row(x, -1.0))
        object.__setattr__(self, "_right_row", _lagrange_row(x, 1.0))

    @classmethod
    def full_line(cls, grid: TimeGrid, L: float, h_out: float, p: int = 10) -> "KernelMesh":
        """Mesh on [-L, L] whose edges include every point of ``grid``."""
        n_left = max(1, math.ceil(L / h_out))
        left = np.linspace(-L, 0.0, n_left + 1)[:-1]
        sub = max(1, math.ceil(grid.dt / h_out))
        inner = np.linspace(0.0, grid.T, grid.M * sub + 1)
        n_right = max(1, math.ceil((L - grid.T) / h_out))
        right = np.linspace(grid.T, L, n_right + 1)[1:]
        return cls(np.concatenate([left, inner, right]), p)

    @property
    def n_cells(self) -> int:
        return len(self.edges) - 1

    @property
    def n_points(self) -> int:
        return len(self.points)

    def edge_index(self, t: float, tol: float = 1e-10) -> int:
        i = int(np.argmin(np.abs(self.edges - t)))
        if abs(self.edges[i] - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"{t} is not a mesh edge")
        return i

    def indicator(self, a: float, b: float) -> np.ndarray:
        """Node values of χ_[a,b] (exact when a, b are edges)."""
        return ((self.points >= a) & (self.points <= b)).astype(float)

    def point_evaluator(self, t: float, side: str = "right") -> tuple[slice, np.ndarray]:
        """(node slice, coefficients) such that f(t±) = coeffs · f[slice].

        ``side='right'`` returns the limit from the right at an edge (the value
        of the cell starting at ``t``); ``'left'`` the limit from the left.
        Inside a cell both coincide.
        """
        e = self.edges
        if t < e[0] or t > e[-1]:
            raise ValueError(f"{t} lies outside the mesh")
        c = int(np.searchsorted(e, t, side="right")) - 1
        at_edge = abs(e[min(c, len(e) - 1)] - t) <= 1e-12 * max(1.0, abs(t))
        if at_edge and side == "left":
            c -= 1
        c = min(max(c, 0), self.n_cells - 1)
        a, b = e[c], e[c + 1]
        y = (2.0 * t - a - b) / (b - a)
        if abs(y + 1.0) < 1e-13:
            row = self._left_row
        elif abs(y - 1.0) < 1e-13:
            row = self._right_row
        else:
            row = _lagrange_row(self._ref_nodes, y)
        return slice(c * self.p, (c + 1) * self.p), row

    def evaluate(self, values: np.ndarray, t: float, side: str = "right") -> np.ndarray:
        sl, row = self.point_evaluator(t, side)
        return np.asarray(values)[..., sl] @ row

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values) @ self.weights
