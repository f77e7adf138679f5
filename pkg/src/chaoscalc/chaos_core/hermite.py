"""Hermite polynomials, Hermite functions and the discretised Hermite basis.

Polynomials use the probabilists' normalisation h_0 = 1, h_1 = x,
h_{n+1} = x h_n - n h_{n-1} (so h_2 = x^2 - 1, h_3 = x^3 - 3x and h_n' = n h_{n-1}).

The Hermite functions are the orthonormal functions

    e_k(x) = π^{-1/4} ((k-1)!)^{-1/2} h_{k-1}(√2 x) exp(-x^2/2),   k = 1, 2, ...

They are evaluated by the normalised recurrence

    ψ_0 = π^{-1/4} e^{-x²/2},  ψ_1 = √2 x ψ_0,
    ψ_{n+1} = √(2/(n+1)) x ψ_n − √(n/(n+1)) ψ_{n−1},

with e_k = ψ_{k-1}.  No factorials are formed, so the values stay bounded
(|e_k| ≤ π^{-1/4}) for any k.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import roots_hermite

from .grid import TimeGrid
from .mesh import KernelMesh

__all__ = [
    "hermite_poly",
    "hermite_polys",
    "hermite_function",
    "hermite_functions",
    "HermiteBasis",
]

MAX_POLY_ORDER = 170


def hermite_polys(N: int, x) -> np.ndarray:
    """Stack ``[h_0(x), ..., h_N(x)]`` along a new leading axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty((N + 1,) + x.shape)
    out[0] = 1.0
    if N >= 1:
        out[1] = x
    for n in range(1, N):
        out[n + 1] = x * out[n] - n * out[n - 1]
    return out


def hermite_poly(n: int, x):
    """Probabilists' Hermite polynomial h_n(x)."""
    if n < 0 or int(n) != n:
        raise ValueError("order must be a non-negative integer")
    if n > MAX_POLY_ORDER:
        raise ValueError(f"order {n} exceeds the supported maximum {MAX_POLY_ORDER}")
    r = hermite_polys(int(n), x)[int(n)]
    return float(r) if np.ndim(r) == 0 else r


def _psi_stack(K: int, x: np.ndarray, with_gaussian: bool = True) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty((K,) + x.shape)
    base = np.pi ** -0.25
    out[0] = base * np.exp(-0.5 * x * x) if with_gaussian else base
    if K >= 2:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, K - 1):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1.0)) * out[n - 1]
    return out


def hermite_functions(K: int, x) -> np.ndarray:
    """``[e_1(x), ..., e_K(x)]`` stacked along a new leading axis."""
    if K < 1:
        raise ValueError("K must be positive")
    return _psi_stack(K, x)


def hermite_function(k: int, t):
    """The k-th Hermite function e_k(t) (k ≥ 1)."""
    if k < 1 or int(k) != k:
        raise ValueError("Hermite function index is 1-based")
    r = _psi_stack(int(k), np.asarray(t, dtype=float))[-1]
    return float(r) if np.ndim(r) == 0 else r


@dataclass(frozen=True, eq=False)
class HermiteBasis:
    """e_1..e_K sampled on a time grid, with exact cumulative integrals.

    ``E_k(t_i) = ∫_0^{t_i} e_k`` is computed cell by cell with Gauss-Legendre
    quadrature (``gl_order`` nodes per cell), which is exact to rounding for
    these entire functions at the cell sizes used.  Whole-line inner products
    use Gauss-Hermite quadrature on the polynomial part, which is exact.

    ``mesh`` is a Gauss-Legendre mesh on [-L, L] whose cell edges contain every
    grid point; it carries kernel factors for :class:`KernelChaos`.  ``L`` is
    chosen so the Hermite-function mass outside [-L, L] is below 1e-12.
    """

    K: int
    grid: TimeGrid
    gl_order: int = 10
    L: float | None = None
    values: np.ndarray = field(init=False, repr=False)
    cumulative: np.ndarray = field(init=False, repr=False)
    mesh: KernelMesh = field(init=False, repr=False)

    def __post_init__(self):
        K = int(self.K)
        if K < 1:
            raise ValueError("K must be positive")
        object.__setattr__(self, "K", K)
        turning = np.sqrt(2.0 * K + 1.0)
        L = float(self.L) if self.L is not None else turning + 10.0
        L = max(L, self.grid.T + 1.0)
        object.__setattr__(self, "L", L)
        h_out = min(0.25, 1.5 / turning)
        mesh = KernelMesh.full_line(self.grid, L, h_out, self.gl_order)
        object.__setattr__(self, "mesh", mesh)

        vals = hermite_functions(K, self.grid.points)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

        # cumulative integrals: Gauss-Legendre cell integrals summed from t = 0
        em = self.mesh_values
        cell_int = (em * mesh.weights).reshape(K, mesh.n_cells, mesh.p).sum(axis=2)
        i0 = mesh.edge_index(0.0)
        j = np.array([mesh.edge_index(t) for t in self.grid.points])
        S = np.concatenate([np.zeros((K, 1)), np.cumsum(cell_int[:, i0:], axis=1)], axis=1)
        cum = S[:, j - i0]
        cum.setflags(write=False)
        object.__setattr__(self, "cumulative", cum)

    # -- derived data -----------------------------------------------------
    @cached_property
    def mesh_values(self) -> np.ndarray:
        """e_k at the mesh nodes, shape (K, n_points)."""
        v = hermite_functions(self.K, self.mesh.points)
        v.setflags(write=False)
        return v

    @cached_property
    def gram(self) -> np.ndarray:
        """(e_j, e_k) over the whole line by Gauss-Hermite quadrature."""
        n = self.K + 2
        # numpy's weights are most accurate but overflow internally past ~150 nodes
        x, w = np.polynomial.hermite.hermgauss(n) if n <= 150 else roots_hermite(n)
        p = _psi_stack(self.K, x, with_gaussian=False)
        return (p * w) @ p.T

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.gram - np.eye(self.K))))

    def mesh_orthonormality_error(self) -> float:
        """Deviation of the mesh Gram matrix from the identity (tail + quadrature)."""
        em = self.mesh_values
        G = (em * self.mesh.weights) @ em.T
        return float(np.max(np.abs(G - np.eye(self.K))))

    def E(self, t: float) -> np.ndarray:
        """Vector (E_1(t), ..., E_K(t)) for a grid time t."""
        return np.array(self.cumulative[:, self.grid.index(t)])

    def e(self, t: float) -> np.ndarray:
        return hermite_functions(self.K, np.asarray(float(t)))

    def project_grid(self, f: np.ndarray) -> np.ndarray:
        """(f, e_k), k ≤ K, for grid samples of a smooth f supported on [0, T]."""
        f = np.asarray(f, dtype=float)
        if f.shape[-1] != len(self.grid):
            raise ValueError("grid function has the wrong length")
        return (f * self.grid.quad_weights) @ self.values.T

    def project_callable(self, f, support: tuple[float, float] | None = (0.0, None)) -> np.ndarray:
        """(f, e_k) for a callable f; by default integrated over [0, T].

        Breakpoints of f should sit on grid points for full accuracy.
        ``support=None`` integrates over the whole mesh [-L, L].
        """
        x = self.mesh.points
        w = self.mesh.weights
        if support is not None:
            a, b = support
            b = self.grid.T if b is None else b
            w = w * self.mesh.indicator(a, b)
        fx = np.asarray(f(x), dtype=float) * np.ones_like(x)
        return self.mesh_values @ (w * fx)

    def metadata(self) -> dict:
        return {
            "K": self.K,
            "grid": self.grid.to_dict(),
            "quadrature": {
                "cumulative": f"Gauss-Legendre, {self.gl_order} nodes per grid cell",
                "whole_line": f"Gauss-Hermite, {self.K + 2} nodes (exact for e_j e_k)",
                "kernel_mesh": f"Gauss-Legendre cells on [-{self.L:.3f}, {self.L:.3f}], "
                               f"{self.mesh.n_cells} cells x {self.mesh.p} nodes",
                "grid_integrals": "composite Newton-Cotes (Boole panels)",
            },
            "tail_bound": self.mesh_orthonormality_error(),
            "orthonormality_error": self.orthonormality_error(),
        }
