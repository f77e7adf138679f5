"""Volterra kernels Φ(t,r) on the triangle t ≤ r and their resolvent Ψ = Σ_n Φ⁽ⁿ⁾.

Rows are handled one ``t`` at a time (and batched over many ``t``): on
[t, T] a row is represented by its values at p Chebyshev points, and the
iterated convolution

    Φ⁽ⁿ⁾(t, r) = ∫ₜʳ Φ⁽ⁿ⁻¹⁾(t, s) Φ(s, r) ds

is evaluated with Gauss–Legendre on [t, r] and barycentric interpolation
of the row.  Mapped to the reference interval the quadrature positions do
not depend on t, so the interpolation matrices are shared by all rows.
For smooth kernels the result is spectrally accurate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import BarycentricInterpolator

from ..chaos_core.grid import TimeGrid
from ..reports import jsonable

__all__ = [
    "VolterraKernel",
    "TriangleKernel",
    "RowEngine",
    "resolvent_phi_n",
    "resolvent_psi",
    "printed_factorial_bound",
    "factorial_bound",
    "terms_for_tol",
]


@dataclass(frozen=True, eq=False)
class VolterraKernel:
    """Φ(t, r) for t ≤ r, vectorised; ``bound`` is C with |Φ| ≤ C on the triangle."""

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    T: float
    name: str = "custom"
    params: dict = field(default_factory=dict)
    bound_value: float | None = None

    def __call__(self, t, r):
        t, r = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
        return np.asarray(self.fn(t, r), dtype=float) * np.ones(t.shape)

    @cached_property
    def bound(self) -> float:
        if self.bound_value is not None:
            return float(self.bound_value)
        x = np.linspace(0.0, self.T, 401)
        t, r = np.meshgrid(x, x, indexing="ij")
        m = t <= r
        return float(np.max(np.abs(self(t[m], r[m]))))

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"

    # -- presets ------------------------------------------------------------
    @classmethod
    def zero(cls, T: float) -> "VolterraKernel":
        return cls(lambda t, r: 0.0, T, "zero", {}, 0.0)

    @classmethod
    def constant(cls, c: float, T: float) -> "VolterraKernel":
        return cls(lambda t, r: c, T, "constant", {"c": c}, abs(c))

    @classmethod
    def exp_decay(cls, T: float, rate: float = 1.0, scale: float = 1.0) -> "VolterraKernel":
        """Φ(t, r) = scale·exp(−rate (r − t)) (convolution type, ρ(x) = scale·e^{−rate x})."""
        return cls(lambda t, r: scale * np.exp(-rate * (r - t)), T, "exp-decay",
                   {"rate": rate, "scale": scale}, abs(scale))

    @classmethod
    def tabulated(cls, grid: TimeGrid, table) -> "VolterraKernel":
        """Bilinear interpolation of an (M+1)×(M+1) table (entries below the diagonal ignored)."""
        from scipy.interpolate import RegularGridInterpolator
        tab = np.asarray(table, dtype=float)
        if tab.shape != (len(grid), len(grid)):
            raise ValueError(f"kernel table must be {len(grid)}×{len(grid)}")
        interp = RegularGridInterpolator((grid.points, grid.points), tab)

        def fn(t, r):
            pts = np.stack([np.clip(t, 0, grid.T), np.clip(r, 0, grid.T)], axis=-1)
            return interp(pts.reshape(-1, 2)).reshape(np.shape(t))
        iu = np.triu_indices(len(grid))
        return cls(fn, grid.T, "tabulated", {}, float(np.max(np.abs(tab[iu]))))


def printed_factorial_bound(C: float, T: float, n: int) -> float:
    """CⁿTⁿ/n! — the bound as commonly stated (not valid in general, see factorial_bound)."""
    return math.exp(n * math.log(C * T) - math.lgamma(n + 1)) if C * T > 0 else 0.0


def factorial_bound(C: float, T: float, n: int) -> float:
    """Cⁿ T^{n−1}/(n−1)!, a valid bound: induction gives |Φ⁽ⁿ⁾(t,r)| ≤ Cⁿ(r−t)^{n−1}/(n−1)!."""
    if C == 0:
        return 0.0
    return C * math.exp((n - 1) * math.log(C * T) - math.lgamma(n)) if C * T > 0 else (C if n == 1 else 0.0)


def terms_for_tol(C: float, T: float, tol: float, max_terms: int = 500) -> int:
    """Smallest N whose remaining tail Σ_{n>N} Cⁿ T^{n−1}/(n−1)! is below ``tol``."""
    if C == 0:
        return 1
    for N in range(1, max_terms + 1):
        nxt = factorial_bound(C, T, N + 1)
        # geometric control of the tail once terms decrease: ratio CT/N
        ratio = C * T / (N + 1)
        if ratio < 1 and nxt / (1 - ratio) < tol:
            return N
    return max_terms


@dataclass(frozen=True)
class TriangleKernel:
    """Kernel values on grid pairs t_i ≤ r_j, stored row-compressed (row i holds j = i..M)."""

    grid: TimeGrid
    rows: tuple
    info: dict = field(default_factory=dict, compare=False)

    def dense(self) -> np.ndarray:
        n = len(self.grid)
        out = np.full((n, n), np.nan)
        for i, row in enumerate(self.rows):
            out[i, i:] = row
        return out

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(r)) for r in self.rows))

    def max_abs_diff(self, fn) -> float:
        """max |K(t_i, r_j) − fn(t_i, r_j)| over the triangle."""
        pts = self.grid.points
        return float(max(np.max(np.abs(row - fn(pts[i], pts[i:]))) for i, row in enumerate(self.rows)))

    def table(self) -> list[dict]:
        pts = self.grid.points
        return [{"t": pts[i], "r": pts[i + j], "value": v} for i, row in enumerate(self.rows) for j, v in enumerate(row)]


class RowEngine:
    """Batched row operations for a kernel Φ on [0, T] with p Chebyshev points per row."""

    def __init__(self, kernel: VolterraKernel, p: int = 32, q: int = 32):
        self.kernel = kernel
        self.T = kernel.T
        self.p, self.q = p, q
        self.x = -np.cos(np.pi * np.arange(p) / (p - 1))          # Chebyshev (2nd kind), ascending
        self.y, self.w = np.polynomial.legendre.leggauss(q)
        # reference positions of GL nodes on [t, r_i]
        u = -1.0 + np.outer(self.x + 1.0, self.y + 1.0) / 2.0       # (p, q)
        self._bary = BarycentricInterpolator(self.x, np.eye(p))
        self.Lint = self._bary(u.ravel()).reshape(p, q, p)
        self.Lgl = self._bary(self.y)                                # full-row GL nodes (q, p)

    def interp_matrix(self, xref) -> np.ndarray:
        return self._bary(np.asarray(xref, dtype=float).ravel()).reshape(np.shape(xref) + (self.p,))

    def nodes(self, t: np.ndarray) -> np.ndarray:
        L = self.T - t
        return t[:, None] + L[:, None] * (self.x[None, :] + 1.0) / 2.0

    def convolution_matrix(self, t: np.ndarray) -> np.ndarray:
        """K[n, i, k]: (Kφ)(r_i) = ∫_{t_n}^{r_i} φ(s) Φ(s, r_i) ds for row values φ at the nodes."""
        L = self.T - t
        r = self.nodes(t)                                            # (n, p)
        u = -1.0 + np.outer(self.x + 1.0, self.y + 1.0) / 2.0
        s = t[:, None, None] + L[:, None, None] * (u[None] + 1.0) / 2.0   # (n, p, q)
        phi = self.kernel(s, r[:, :, None])
        half = (L[:, None] * (self.x[None, :] + 1.0) / 4.0)          # (r_i − t)/2
        a = phi * self.w[None, None, :] * half[:, :, None]
        return np.matmul(a.transpose(1, 0, 2), self.Lint).transpose(1, 0, 2)

    def phi_n_rows(self, t: np.ndarray, n_max: int) -> list[np.ndarray]:
        """[Φ⁽¹⁾, ..., Φ⁽ⁿ_max⁾] at the row nodes, each of shape (len(t), p)."""
        t = np.asarray(t, dtype=float)
        r = self.nodes(t)
        cur = self.kernel(np.broadcast_to(t[:, None], r.shape), r)
        out = [cur]
        if n_max > 1:
            K = self.convolution_matrix(t)
            for _ in range(n_max - 1):
                cur = np.matmul(K, cur[:, :, None])[:, :, 0]
                out.append(cur)
        return out

    def evaluate_rows(self, t: np.ndarray, vals: np.ndarray, r) -> np.ndarray:
        """Interpolate row values (len(t), p) at r (same leading shape, any trailing)."""
        t = np.asarray(t, dtype=float)
        L = self.T - t
        r = np.asarray(r, dtype=float)
        safe = np.where(L > 0, L, 1.0)
        xr = 2.0 * (r - t.reshape(t.shape + (1,) * (r.ndim - 1))) / safe.reshape(safe.shape + (1,) * (r.ndim - 1)) - 1.0
        xr = np.clip(xr, -1.0, 1.0)
        B = self.interp_matrix(xr)
        out = np.einsum("n...k,nk->n...", B, vals)
        degenerate = L <= 0
        if np.any(degenerate):
            out[degenerate] = vals[degenerate, -1].reshape((-1,) + (1,) * (r.ndim - 1))
        return out

    def row_integral(self, t: np.ndarray, vals: np.ndarray, h) -> np.ndarray:
        """∫ₜᵀ row(r) h(r) dr for each row (GL on [t, T])."""
        t = np.asarray(t, dtype=float)
        L = self.T - t
        rq = t[:, None] + L[:, None] * (self.y[None, :] + 1.0) / 2.0
        rowq = vals @ self.Lgl.T
        return 0.5 * L * np.sum(self.w[None, :] * rowq * h(rq), axis=1)


def _rows_on_grid(engine: RowEngine, grid: TimeGrid, row_vals: np.ndarray) -> tuple:
    pts = grid.points
    rows = []
    for i in range(len(pts)):
        r = pts[i:]
        rows.append(engine.evaluate_rows(pts[i:i + 1], row_vals[i:i + 1], r[None, :])[0])
    return tuple(rows)


def resolvent_phi_n(kernel: VolterraKernel, n: int, grid: TimeGrid, p: int = 32, q: int = 32) -> TriangleKernel:
    """Φ⁽ⁿ⁾ on the grid triangle, with the a-priori factorial bounds recorded in ``info``.

    ``info["printed_bound"]`` is CⁿTⁿ/n!, ``info["valid_bound"]`` is
    Cⁿ T^{n−1}/(n−1)!; ``printed_bound_violated`` flags whether the computed
    values exceed the former (they can: Φ ≡ 1, T = 1, n = 2 gives
    Φ⁽²⁾(0, 1) = 1 > 1/2).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    eng = RowEngine(kernel, p, q)
    vals = eng.phi_n_rows(grid.points, n)[-1]
    tk = TriangleKernel(grid, _rows_on_grid(eng, grid, vals))
    C, T = kernel.bound, grid.T
    slack = 1e-10 * max(1.0, C ** n)
    mx = tk.max_abs()
    info = {"n": n, "C": C, "max_abs": mx, "printed_bound": printed_factorial_bound(C, T, n),
            "valid_bound": factorial_bound(C, T, n)}
    info["printed_bound_violated"] = bool(mx > info["printed_bound"] + slack)
    info["valid_bound_violated"] = bool(mx > info["valid_bound"] + slack)
    return TriangleKernel(grid, tk.rows, info)


def resolvent_psi(kernel: VolterraKernel, grid: TimeGrid, tol: float = 1e-12, p: int = 32, q: int = 32,
                  check_identity: bool = True) -> TriangleKernel:
    """Ψ = Σ_{n≤N} Φ⁽ⁿ⁾ with N from the factorial tail bound, on the grid triangle.

    ``info`` records N, the per-n maxima against both factorial bounds, and
    (optionally) the residual of the resolvent identity Ψ = Φ + Φ∗Ψ at all
    grid pairs, computed with independent quadrature in the first argument.
    """
    C, T = kernel.bound, grid.T
    N = terms_for_tol(C, T, tol)
    eng = RowEngine(kernel, p, q)
    terms = eng.phi_n_rows(grid.points, N)
    psi_nodes = np.sum(terms, axis=0)
    rows = _rows_on_grid(eng, grid, psi_nodes)
    maxima = [float(np.max(np.abs(tm))) for tm in terms]
    slack = 1e-10
    printed = [printed_factorial_bound(C, T, n + 1) for n in range(N)]
    valid = [factorial_bound(C, T, n + 1) for n in range(N)]
    info = {"terms": N, "tol": tol, "C": C, "T": T, "term_max": maxima,
            "printed_bound": printed, "valid_bound": valid,
            "printed_bound_violations": [n + 1 for n in range(N) if maxima[n] > printed[n] * (1 + slack) + slack],
            "valid_bound_violations": [n + 1 for n in range(N) if maxima[n] > valid[n] * (1 + slack) + slack]}
    tk = TriangleKernel(grid, rows, info)
    if check_identity:
        info["identity_residual"] = resolvent_identity_residual(kernel, eng, grid, psi_nodes)
    return tk


def psi_at(eng: RowEngine, psi_nodes_fn, s: np.ndarray, r: np.ndarray) -> np.ndarray:
    vals = psi_nodes_fn(s)
    return eng.evaluate_rows(s, vals, r[:, None])[:, 0]


def resolvent_identity_residual(kernel: VolterraKernel, eng: RowEngine, grid: TimeGrid,
                                psi_nodes: np.ndarray, chunk: int = 2048) -> float:
    """max over grid pairs of |Ψ(t,r) − Φ(t,r) − ∫ₜʳ Φ(t,s)Ψ(s,r) ds|.

    The rows Ψ(s, ·) at the quadrature points s are recomputed with the row
    engine (a different route from the row-t solve being checked).
    """
    pts = grid.points
    I, J = np.triu_indices(len(pts))
    t, r = pts[I], pts[J]
    psi_tr = np.concatenate([eng.evaluate_rows(pts[i:i + 1], psi_nodes[i:i + 1], np.array([[pts[j]]]))[0]
                             for i, j in zip(I, J)]).ravel()
    y, w = eng.y, eng.w
    L = r - t
    s = t[:, None] + L[:, None] * (y[None, :] + 1.0) / 2.0        # (pairs, q)
    C, T = kernel.bound, grid.T
    nterms = terms_for_tol(C, T, 1e-14)
    conv = np.zeros(len(t))
    flat_s = s.ravel()
    flat_r = np.repeat(r, len(y))
    vals = np.empty(flat_s.shape)
    for a in range(0, len(flat_s), chunk):
        ss = flat_s[a:a + chunk]
        rows = np.sum(eng.phi_n_rows(ss, nterms), axis=0)
        vals[a:a + chunk] = eng.evaluate_rows(ss, rows, flat_r[a:a + chunk, None])[:, 0]
    vals = vals.reshape(s.shape)
    conv = 0.5 * L * np.sum(w[None, :] * kernel(np.broadcast_to(t[:, None], s.shape), s) * vals, axis=1)
    res = psi_tr - kernel(t, r) - conv
    return float(np.max(np.abs(res)))


# ---------------------------------------------------------------------------
# applying the resolvent to a function
# ---------------------------------------------------------------------------

def psi_rows(eng: RowEngine, t, tol: float = 1e-13) -> np.ndarray:
    """Ψ(t, ·) at the row nodes for each t (Neumann partial sum to the factorial tail bound)."""
    N = terms_for_tol(eng.kernel.bound, eng.T, tol)
    return np.sum(eng.phi_n_rows(np.asarray(t, dtype=float), N), axis=0)


def volterra_values(eng: RowEngine, h, t, tol: float = 1e-13, chunk: int = 4096) -> np.ndarray:
    """y(t) = h(t) + ∫ₜᵀ Ψ(t, r) h(r) dr, i.e. the solution of y(t) = h(t) + ∫ₜᵀ Φ(t, r) y(r) dr.

    ``h`` may depend on t through a two-argument form ``h(r, t)`` (flagged by
    passing a tuple ``(h, True)``).
    """
    fn, two_arg = (h if isinstance(h, tuple) else (h, False))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(t.shape)
    for a in range(0, len(t), chunk):
        tt = t[a:a + chunk]
        rows = psi_rows(eng, tt, tol)
        if two_arg:
            integral = eng.row_integral(tt, rows, lambda rq: fn(rq, tt[:, None]))
            base = fn(tt, tt)
        else:
            integral = eng.row_integral(tt, rows, fn)
            base = fn(tt)
        out[a:a + chunk] = np.asarray(base, dtype=float) * np.ones(tt.shape) + integral
    return out
