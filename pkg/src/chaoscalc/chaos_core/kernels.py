"""Iterated-integral (kernel) representation F = Σ_n I_n(f_n).

Each symmetric kernel f_n is stored as a finite sum of symmetrised tensor
products of one-dimensional factors,

    f_n = Σ_r w_r · sym(g_{r,1} ⊗ ... ⊗ g_{r,n}),

with the factors g sampled at the nodes of a Gauss-Legendre :class:`KernelMesh`.
This format is closed under the operations the calculus needs — restriction to
[0, t]ⁿ (conditional expectation), freezing one argument (Malliavin
derivative), linear combinations — and keeps indicator kernels such as
χ_[0,t]^{⊗n} exact, which a dense array on the time grid cannot do.
"""
from __future__ import annotations

import math
from itertools import combinations_with_replacement, permutations
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ..errors import BasisInsufficiencyError, OrderOverflowError
from .chaos import HermiteChaos
from .grid import TimeGrid
from .hermite import HermiteBasis
from .mesh import KernelMesh
from .multiindex import MultiIndex, Truncation, index_from_tuple

__all__ = ["KernelChaos", "kernel_to_hermite", "hermite_to_kernel"]

DEFAULT_KERNEL_ORDER = 3


class KernelChaos:
    """f_0 plus symmetric kernels f_1..f_{N_k} in rank-one factor form.

    ``terms[n]`` is a pair ``(weights, ids)`` with ``weights`` of shape (R,)
    and ``ids`` of shape (R, n) indexing rows of ``factors``.
    """

    __slots__ = ("grid", "mesh", "max_order", "f0", "factors", "terms")

    def __init__(self, grid: TimeGrid, mesh: KernelMesh, f0: float = 0.0,
                 factors: np.ndarray | None = None,
                 terms: Mapping[int, tuple[np.ndarray, np.ndarray]] | None = None,
                 max_order: int = DEFAULT_KERNEL_ORDER):
        self.grid = grid
        self.mesh = mesh
        self.f0 = float(f0)
        fac = np.zeros((0, mesh.n_points)) if factors is None else np.asarray(factors, dtype=float)
        if fac.ndim != 2 or fac.shape[1] != mesh.n_points:
            raise ValueError("factor table must have shape (n_factors, n_mesh_points)")
        fac.setflags(write=False)
        self.factors = fac
        clean: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for n, (w, ids) in (terms or {}).items():
            w = np.asarray(w, dtype=float).reshape(-1)
            ids = np.asarray(ids, dtype=np.int64).reshape(len(w), n)
            if n < 1:
                raise ValueError("term orders start at 1; use f0 for constants")
            if n > max_order:
                raise ValueError(f"order {n} exceeds kernel order {max_order}")
            if len(w) == 0:
                continue
            if ids.min() < 0 or ids.max() >= len(fac):
                raise ValueError("factor id out of range")
            w.setflags(write=False)
            ids.setflags(write=False)
            clean[n] = (w, ids)
        self.terms = clean
        self.max_order = int(max_order)

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, basis: HermiteBasis, c: float, max_order: int = DEFAULT_KERNEL_ORDER) -> "KernelChaos":
        return cls(basis.grid, basis.mesh, c, max_order=max_order)

    @classmethod
    def from_terms(cls, basis: HermiteBasis, f0: float = 0.0,
                   terms: Iterable[tuple[float, Sequence]] = (),
                   max_order: int = DEFAULT_KERNEL_ORDER) -> "KernelChaos":
        """Build from ``(weight, [g_1, ..., g_n])`` with each g a callable or mesh array."""
        mesh = basis.mesh
        factors: list[np.ndarray] = []
        by_order: dict[int, tuple[list, list]] = {}
        for w, gs in terms:
            ids = []
            for g in gs:
                v = np.asarray(g(mesh.points), dtype=float) * np.ones(mesh.n_points) if callable(g) \
                    else np.asarray(g, dtype=float)
                factors.append(v)
                ids.append(len(factors) - 1)
            n = len(ids)
            if n == 0:
                f0 += w
                continue
            by_order.setdefault(n, ([], []))
            by_order[n][0].append(w)
            by_order[n][1].append(ids)
        fac = np.array(factors) if factors else None
        terms_arr = {n: (np.array(w), np.array(ids)) for n, (w, ids) in by_order.items()}
        return cls(basis.grid, mesh, f0, fac, terms_arr, max_order)

    @classmethod
    def indicator_power(cls, basis: HermiteBasis, n: int, a: float = 0.0, b: float | None = None,
                        weight: float = 1.0, max_order: int = DEFAULT_KERNEL_ORDER) -> "KernelChaos":
        """weight · I_n(χ_[a,b]^{⊗n}); for [0,t] this is weight · t^{n/2} h_n(B(t)/√t)."""
        b = basis.grid.T if b is None else b
        chi = basis.mesh.indicator(a, b)
        if n == 0:
            return cls.constant(basis, weight, max_order)
        return cls(basis.grid, basis.mesh, 0.0, chi[None, :],
                   {n: (np.array([weight]), np.zeros((1, n), dtype=np.int64))}, max_order)

    # -- structure ------------------------------------------------------------
    def orders(self) -> list[int]:
        return sorted(self.terms)

    def _compatible(self, other: "KernelChaos"):
        if other.mesh is not self.mesh:
            if other.mesh.n_points != self.mesh.n_points or not np.array_equal(other.mesh.edges, self.mesh.edges):
                raise ValueError("kernel elements live on different meshes")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return KernelChaos(self.grid, self.mesh, self.f0 + other, self.factors, self.terms, self.max_order)
        self._compatible(other)
        off = len(self.factors)
        fac = np.vstack([self.factors, other.factors])
        terms: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for n in set(self.terms) | set(other.terms):
            ws, idss = [], []
            if n in self.terms:
                ws.append(self.terms[n][0])
                idss.append(self.terms[n][1])
            if n in other.terms:
                ws.append(other.terms[n][0])
                idss.append(other.terms[n][1] + off)
            terms[n] = (np.concatenate(ws), np.vstack(idss))
        return KernelChaos(self.grid, self.mesh, self.f0 + other.f0, fac, terms,
                           max(self.max_order, other.max_order))

    __radd__ = __add__

    def __mul__(self, s):
        s = float(s)
        return KernelChaos(self.grid, self.mesh, s * self.f0, self.factors,
                           {n: (s * w, ids) for n, (w, ids) in self.terms.items()}, self.max_order)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-1.0) * other

    def with_factors(self, factors: np.ndarray) -> "KernelChaos":
        return KernelChaos(self.grid, self.mesh, self.f0, factors, self.terms, self.max_order)

    def component(self, n: int) -> "KernelChaos":
        """The n-th homogeneous chaos I_n(f_n) alone."""
        if n == 0:
            return KernelChaos(self.grid, self.mesh, self.f0, max_order=self.max_order)
        terms = {n: self.terms[n]} if n in self.terms else {}
        return KernelChaos(self.grid, self.mesh, 0.0, self.factors, terms, self.max_order)

    # -- kernel values --------------------------------------------------------
    def kernel_on_nodes(self, n: int, node_sets: Sequence[np.ndarray]) -> np.ndarray:
        """Symmetric f_n evaluated on the tensor grid of mesh-node index sets."""
        shape = tuple(len(s) for s in node_sets)
        out = np.zeros(shape)
        if n not in self.terms:
            return out
        w, ids = self.terms[n]
        perms = list(permutations(range(n)))
        for r in range(len(w)):
            for p in perms:
                vec = [self.factors[ids[r, p[i]]][node_sets[i]] for i in range(n)]
                term = vec[0]
                for v in vec[1:]:
                    term = np.multiply.outer(term, v)
                out += w[r] / len(perms) * term
        return out

    def gram(self) -> np.ndarray:
        return (self.factors * self.mesh.weights) @ self.factors.T

    def kernel_norm_sq(self, n: int) -> float:
        """‖f_n‖² in L²(λⁿ) for the symmetrised kernel."""
        if n not in self.terms:
            return 0.0
        w, ids = self.terms[n]
        G = self.gram()
        total = 0.0
        perms = list(permutations(range(n)))
        for p in perms:
            prod = np.ones((len(w), len(w)))
            for i in range(n):
                prod *= G[np.ix_(ids[:, i], ids[:, p[i]])]
            total += w @ prod @ w
        return float(total) / len(perms)

    def l2_norm(self) -> float:
        s = self.f0 ** 2
        for n in self.terms:
            s += math.factorial(n) * self.kernel_norm_sq(n)
        return math.sqrt(max(s, 0.0))

    def expectation(self) -> float:
        return self.f0

    # -- restriction / evaluation of factors ----------------------------------
    def restrict(self, a: float, b: float) -> "KernelChaos":
        """Multiply every kernel by χ_[a,b]ⁿ."""
        return self.with_factors(self.factors * self.mesh.indicator(a, b))

    def factor_values_at(self, t: float) -> np.ndarray:
        """g(t⁺) for every factor (left limit at the horizon)."""
        side = "left" if t >= self.grid.T - 1e-12 * self.grid.T else "right"
        return self.mesh.evaluate(self.factors, t, side)

    def support_violation(self, t: float) -> float:
        """max |f_n| over mesh nodes outside [0, t]ⁿ (adaptedness diagnostic)."""
        outside = self.mesh.indicator(0.0, t) == 0.0
        worst = 0.0
        for n, (w, ids) in self.terms.items():
            used = np.unique(ids)
            bad = np.abs(self.factors[used][:, outside])
            if bad.size:
                # any product with a factor outside [0,t] sits outside the cube
                fmax = np.max(np.abs(self.factors[used]), axis=1)
                worst = max(worst, float(np.max(np.abs(w))) * float(np.max(bad)) * float(np.max(fmax)) ** (n - 1))
        return worst

    def __repr__(self) -> str:
        counts = {n: len(w) for n, (w, _) in self.terms.items()}
        return f"KernelChaos(f0={self.f0:.6g}, terms={counts}, factors={len(self.factors)})"


def _projection_tensor(F: KernelChaos, n: int, P: np.ndarray, K: int, chunk: int = 64) -> np.ndarray:
    w, ids = F.terms[n]
    T = np.zeros(K ** n)
    for s in range(0, len(w), chunk):
        ws, idc = w[s:s + chunk], ids[s:s + chunk]
        A = ws[:, None] * P[idc[:, 0]]
        for i in range(1, n):
            A = (A[:, :, None] * P[idc[:, i]][:, None, :]).reshape(len(ws), -1)
        T += A.sum(axis=0)
    return T.reshape((K,) * n)


def _symmetrize(T: np.ndarray) -> np.ndarray:
    n = T.ndim
    if n <= 1:
        return T
    perms = list(permutations(range(n)))
    S = np.zeros_like(T)
    for p in perms:
        S += np.transpose(T, p)
    return S / len(perms)


def kernel_to_hermite(F: KernelChaos, basis: HermiteBasis, truncation: Truncation | None = None,
                      tol: float | None = None, return_residual: bool = False,
                      drop_rel: float = 1e-14):
    """Expand each f_n in the tensor basis e_{k_1} ⊗ ... ⊗ e_{k_n} and map to H_α.

    The symmetric tensor coefficient of type α (|α| = n) enters H_α with the
    multinomial weight n!/α!.  Coefficients below ``drop_rel`` times the
    largest coefficient of the same order are rounding noise and are dropped.
    The projection residual ‖f_n‖² − ‖P_K f_n‖² is
    computed per order when ``tol`` is given or ``return_residual`` is set; a
    residual (as a norm) above ``tol`` raises :class:`BasisInsufficiencyError`.
    """
    K = basis.K if truncation is None else truncation.K
    N = F.max_order if truncation is None else truncation.N
    truncation = truncation or Truncation(K, max(N, max(F.terms, default=0)))
    coef: dict[MultiIndex, float] = {}
    if F.f0 != 0.0:
        coef[MultiIndex()] = F.f0
    residual: dict[int, float] = {}
    if len(F.factors):
        P = (F.factors * F.mesh.weights) @ basis.mesh_values[:K].T
    for n in sorted(F.terms):
        if n > truncation.N:
            raise OrderOverflowError(MultiIndex([n]), truncation.N)
        S = _symmetrize(_projection_tensor(F, n, P, K))
        floor = drop_rel * math.factorial(n) * float(np.max(np.abs(S), initial=0.0))
        for combo in combinations_with_replacement(range(K), n):
            alpha = index_from_tuple([k + 1 for k in combo])
            weight = math.factorial(n)
            for _, a in alpha.support():
                weight //= math.factorial(a)
            c = weight * S[combo]
            if abs(c) > floor:
                coef[alpha] = coef.get(alpha, 0.0) + c
        if tol is not None or return_residual:
            res2 = F.kernel_norm_sq(n) - float(np.sum(S * S))
            residual[n] = math.sqrt(max(res2, 0.0))
            if tol is not None and residual[n] > tol:
                raise BasisInsufficiencyError(residual[n], tol, n)
    out = HermiteChaos(truncation, coef)
    return (out, residual) if return_residual else out


def hermite_to_kernel(F: HermiteChaos, basis: HermiteBasis, max_order: int = DEFAULT_KERNEL_ORDER) -> KernelChaos:
    """H_α ↦ I_{|α|}(sym(e^{⊗α})), with the e_k sampled on the whole-line mesh."""
    if F.K > basis.K:
        raise ValueError(f"chaos uses {F.K} variables but the basis has only {basis.K}")
    by_order: dict[int, tuple[list, list]] = {}
    f0 = 0.0
    for a, c in F.items():
        n = a.order
        if n == 0:
            f0 += c
            continue
        if n > max_order:
            raise OrderOverflowError(a, max_order)
        by_order.setdefault(n, ([], []))
        by_order[n][0].append(c)
        by_order[n][1].append([k - 1 for k in a.to_sorted_tuple()])
    terms = {n: (np.array(w), np.array(ids, dtype=np.int64)) for n, (w, ids) in by_order.items()}
    return KernelChaos(basis.grid, basis.mesh, f0, np.array(basis.mesh_values), terms, max_order)
