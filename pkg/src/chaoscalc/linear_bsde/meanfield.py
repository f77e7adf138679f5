"""Deterministic system V = F + AV for the means (Ȳ, Z̄, K̄) of a linear mean-field BSDE.

Two forms of the system are offered:

* ``form="corrected"`` (default).  With deterministic coefficients the
  driver terms α₂Ȳ + β₂Z̄ + ∫η₂K̄ν + γ are deterministic, Γ(t, ·) does not
  depend on F_t, and so Z(t) = lim_{r↑t} D_rY(t) = c_B g(t,T) and
  K(t,ζ) = c_N ζ g(t,T) exactly.  Rows 2 and 3 of A vanish and only the
  Ȳ-row couples.
* ``form="literal"`` keeps the rows 2–3 obtained from D_tΓ(t,T) = β₁(t)Γ(t,T)
  (scaled by β₁(t) and η₁(t,ζ)), for comparison.

The γ contribution to F is controlled by ``gamma_mode``: "derived" uses
∫ₜᵀ g(t,s)γ(s)ds in row 1 and the matching terms in rows 2–3 of the chosen
form, "printed" adds ∫ₜᵀγ(s)ds to every row, "drop" keeps the row-1 term
and omits it from rows 2–3.

Integrals in s use the trapezoid rule on the grid, which is additive over
grid intervals; this makes the backward interval-by-interval solution
coincide with a single dense solve of the whole discretised system.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ..errors import IntervalTooLongError, UnsupportedError
from ..pathwise_mc.ensemble import MCEnsemble
from ..reports import jsonable
from .closed_form import check_ensemble, closed_form_Y, gamma_paths
from .spec import LinearBSDESpec, _jump_state

__all__ = [
    "MeanFieldVector",
    "MeanFieldOperator",
    "meanfield_operator",
    "meanfield_F_vector",
    "neumann_solve",
    "dense_solve",
    "MeanFieldSolution",
    "meanfield_bsde_solve",
    "NORM_TARGET",
]

NORM_TARGET = 0.9
FORMS = ("corrected", "literal")
GAMMA_MODES = ("derived", "printed", "drop")


@dataclass(frozen=True)
class MeanFieldVector:
    """(V₁, V₂, V₃) = (Ȳ, Z̄, K̄) on the grid nodes ``idx`` (V₃: one column per atom)."""

    t: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    V3: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    @property
    def n_atoms(self) -> int:
        return self.V3.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.V1, self.V2, self.V3.ravel()])

    @classmethod
    def from_flat(cls, t, x, n_atoms: int, info=None) -> "MeanFieldVector":
        n = len(t)
        return cls(np.asarray(t), x[:n].copy(), x[n:2 * n].copy(), x[2 * n:].reshape(n, n_atoms).copy(), info or {})

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.flat()))) if self.flat().size else 0.0

    def max_abs_diff(self, other: "MeanFieldVector") -> float:
        return float(np.max(np.abs(self.flat() - other.flat())))

    def table(self) -> list[dict]:
        rows = []
        for i, t in enumerate(self.t):
            row = {"t": t, "Ybar": self.V1[i], "Zbar": self.V2[i]}
            for j in range(self.n_atoms):
                row[f"Kbar_atom{j}"] = self.V3[i, j]
            rows.append(row)
        return rows


def _check_form(form: str, gamma_mode: str = "derived"):
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}, got {form!r}")
    if gamma_mode not in GAMMA_MODES:
        raise ValueError(f"gamma_mode must be one of {GAMMA_MODES}, got {gamma_mode!r}")


def _kernel_block(spec: LinearBSDESpec, rows: np.ndarray, cols: np.ndarray, form: str) -> np.ndarray:
    """Matrix of t_i ↦ ∫_{max(t_i, s_lo)}^{s_hi} A(t_i, s) V(s) ds for rows × cols.

    Unknown layout per node set: [V₁ (n), V₂ (n), V₃ (n × m, atom fastest)].
    ``cols`` must be a contiguous index range [s_lo, s_hi].
    """
    grid = spec.grid
    t, s = grid.points[rows], grid.points[cols]
    lo, hi = cols[0], cols[-1]
    nr, nc = len(rows), len(cols)
    m = spec.levy.n_atoms
    # trapezoid weights on [max(t_i, s_lo), s_hi]
    W = np.zeros((nr, nc))
    for a, i in enumerate(rows):
        start = max(i, lo)
        if start >= hi:
            continue
        W[a, start - lo:hi - lo + 1] = grid.dt
        W[a, start - lo] = W[a, hi - lo] = 0.5 * grid.dt
    G = np.exp(spec.L_alpha(s)[None, :] - spec.L_alpha(t)[:, None]) * W
    base = np.zeros((nr, nc * (2 + m)))
    base[:, :nc] = G * spec.f_alpha2(s)[None, :]
    base[:, nc:2 * nc] = G * spec.f_beta2(s)[None, :]
    if m:
        eta2nu = spec.f_eta2.atom_columns(s) * spec.levy.nus[None, :]  # (nc, m)
        base[:, 2 * nc:] = (G[:, :, None] * eta2nu[None, :, :]).reshape(nr, nc * m)
    A = np.zeros((nr * (2 + m), nc * (2 + m)))
    A[:nr] = base
    if form == "literal":
        A[nr:2 * nr] = spec.f_beta1(t)[:, None] * base
        if m:
            eta1 = spec.f_eta1.atom_columns(t)  # (nr, m)
            A[2 * nr:] = (eta1[:, :, None] * base[:, None, :]).reshape(nr * m, -1)
    return A


@dataclass(frozen=True, eq=False)
class MeanFieldOperator:
    """Discretised A on the nodes lo..hi (integration in s over [t, t_hi])."""

    spec: LinearBSDESpec
    lo: int
    hi: int
    form: str
    matrix: np.ndarray = field(repr=False)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def _measure(self) -> np.ndarray:
        n = self.hi - self.lo + 1
        w = np.full(n, self.spec.grid.dt)
        w[0] = w[-1] = 0.5 * self.spec.grid.dt
        if n == 1:
            w[:] = self.spec.grid.dt
        m = self.spec.levy.n_atoms
        parts = [w, w]
        if m:
            parts.append((w[:, None] * self.spec.levy.nus[None, :]).ravel())
        return np.concatenate(parts)

    def hs_norm(self) -> float:
        """L²(dt ⊗ dt ν) Hilbert–Schmidt norm of the kernel (an upper bound on ‖A‖)."""
        mu = self._measure()
        S = self.matrix * np.sqrt(mu)[:, None] / np.sqrt(mu)[None, :]
        return float(np.linalg.norm(S))

    def inf_norm(self) -> float:
        return float(np.max(np.sum(np.abs(self.matrix), axis=1))) if self.matrix.size else 0.0

    def apply(self, V: MeanFieldVector) -> MeanFieldVector:
        x = self.matrix @ V.flat()
        return MeanFieldVector.from_flat(V.t, x, self.spec.levy.n_atoms)


def meanfield_operator(spec: LinearBSDESpec, lo: int = 0, hi: int | None = None,
                       form: str = "corrected") -> MeanFieldOperator:
    """The operator (AV)(t) = ∫ₜ^{t_hi} A(t,s)V(s)ds on grid nodes lo..hi."""
    _check_form(form)
    hi = spec.grid.M if hi is None else hi
    nodes = np.arange(lo, hi + 1)
    return MeanFieldOperator(spec, lo, hi, form, _kernel_block(spec, nodes, nodes, form))


def meanfield_F_vector(spec: LinearBSDESpec, ens: MCEnsemble | None = None, form: str = "corrected",
                       gamma_mode: str = "derived", method: str = "closed") -> MeanFieldVector:
    """Free term F of V = F + AV on the full grid.

    Row 1: E[ξΓ(t,T)] + γ-term; row 2: E[D_tξ Γ(t,T)] (+ β₁(t)E[ξΓ(t,T)] in
    the literal form); row 3: E[D_{t,ζ}ξ Γ(t,T)] (+ η₁(t,ζ)E[ξΓ(t,T)]).
    ``method="mc"`` estimates the expectations from the ensemble instead of
    the closed forms.
    """
    _check_form(form, gamma_mode)
    if not spec.gamma.is_deterministic:
        raise UnsupportedError("the mean-field system requires a deterministic drift γ")
    grid = spec.grid
    t = grid.points
    T = grid.T
    gT = spec.g(t, T)
    xi = spec.xi
    zetas = spec.levy.zetas
    m = spec.levy.n_atoms
    if method == "closed":
        E_xiG = gT * (xi.c0 + xi.cB * (spec.L_beta(T) - spec.L_beta(t)) + xi.cN * (spec.L_eta(T) - spec.L_eta(t)))
        E_G = gT
    elif method == "mc":
        if ens is None:
            raise ValueError("method='mc' needs an ensemble")
        G = gamma_paths(spec, ens)
        GT = np.exp(G.log[:, -1:] - G.log)
        E_xiG = np.mean(xi.value(ens)[:, None] * GT, axis=0)
        E_G = np.mean(GT, axis=0)
    else:
        raise ValueError("method must be 'closed' or 'mc'")
    I0 = spec.weighted_antiderivative(spec.f_g0)
    g_gamma = np.exp(-spec.L_alpha(t)) * (I0(T) - I0(t))
    plain = grid.antiderivative(spec.f_g0)
    flat_gamma = plain(T) - plain(t)

    F1 = E_xiG + (flat_gamma if gamma_mode == "printed" else g_gamma)
    F2 = xi.cB * E_G
    F3 = xi.cN * E_G[:, None] * zetas[None, :] if m else np.zeros((len(t), 0))
    if form == "literal":
        F2 = F2 + spec.f_beta1(t) * E_xiG
        if m:
            F3 = F3 + spec.f_eta1.atom_columns(t) * E_xiG[:, None]
    if gamma_mode == "printed":
        F2 = F2 + flat_gamma
        F3 = F3 + flat_gamma[:, None]
    elif gamma_mode == "derived" and form == "literal":
        F2 = F2 + spec.f_beta1(t) * g_gamma
        if m:
            F3 = F3 + spec.f_eta1.atom_columns(t) * g_gamma[:, None]
    return MeanFieldVector(t.copy(), F1, F2, F3, {"form": form, "gamma_mode": gamma_mode, "method": method})


def _as_matrix(A) -> tuple[np.ndarray, float]:
    if isinstance(A, MeanFieldOperator):
        return A.matrix, A.hs_norm()
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return A, float(np.linalg.norm(A, 2))


def neumann_solve(A, F, tol: float = 1e-12, max_terms: int = 10_000):
    """V = Σ_n AⁿF, stopped when the next term's sup norm is below ``tol``.

    ``A`` is a :class:`MeanFieldOperator` (norm estimate: Hilbert–Schmidt) or a
    plain matrix (norm estimate: spectral norm); ``F`` a matching
    :class:`MeanFieldVector` or array.  Raises :class:`IntervalTooLongError`
    when the norm estimate is ≥ 1.
    """
    mat, norm = _as_matrix(A)
    if norm >= 1.0:
        raise IntervalTooLongError(norm, None)
    is_vec = isinstance(F, MeanFieldVector)
    f = F.flat() if is_vec else np.asarray(F, dtype=float)
    V = f.copy()
    term = f
    n = 0
    while n < max_terms:
        term = mat @ term
        n += 1
        V += term
        if np.max(np.abs(term), initial=0.0) < tol:
            break
    else:
        raise IntervalTooLongError(norm, None)
    if is_vec:
        return MeanFieldVector.from_flat(F.t, V, F.n_atoms, {**F.info, "neumann_terms": n, "norm_estimate": norm})
    return V


def dense_solve(spec: LinearBSDESpec, F: MeanFieldVector, form: str = "corrected") -> MeanFieldVector:
    """LU solve of (I − A)V = F for the whole grid at once (oracle)."""
    op = meanfield_operator(spec, 0, spec.grid.M, form)
    mat = np.eye(op.matrix.shape[0]) - op.matrix
    lu = scipy.linalg.lu_factor(mat)
    x = scipy.linalg.lu_solve(lu, F.flat())
    return MeanFieldVector.from_flat(F.t, x, F.n_atoms, {**F.info, "solver": "dense-lu"})


@dataclass(frozen=True, eq=False)
class MeanFieldSolution:
    spec: LinearBSDESpec
    V: MeanFieldVector
    F: MeanFieldVector
    Y: np.ndarray | None
    intervals: list
    norms: list
    continuity_jump: float
    form: str
    gamma_mode: str
    seed: int | None = None
    n_paths: int = 0

    @property
    def delta(self) -> float:
        lo, hi = self.intervals[0]
        return (hi - lo) * self.spec.grid.dt

    def summary(self) -> dict:
        return jsonable({"intervals": self.intervals, "norms": self.norms, "delta": self.delta,
                         "continuity_jump": self.continuity_jump, "form": self.form,
                         "gamma_mode": self.gamma_mode, "Ybar0": self.V.V1[0],
                         "seed": self.seed, "n_paths": self.n_paths})


def _intervals(M: int, cells: int) -> list[tuple[int, int]]:
    out, hi = [], M
    while hi > 0:
        lo = max(0, hi - cells)
        out.append((lo, hi))
        hi = lo
    return out


def meanfield_bsde_solve(spec: LinearBSDESpec, ens: MCEnsemble | None = None, delta: float | None = None,
                         tol: float = 1e-13, form: str = "corrected", gamma_mode: str = "derived",
                         continuity_tol: float = 1e-8) -> MeanFieldSolution:
    """Backward interval-by-interval Neumann solution of V = F + AV, then Y via the closed formula.

    δ starts at T (or the given value) and is halved until every interval's
    Hilbert–Schmidt estimate is ≤ 0.9.  On [t_lo, t_hi] the equation is
    V = F̃ + A_loc V with F̃(t) = F(t) + ∫_{t_hi}^T A(t,s)V(s)ds from the
    already-solved part; the recomputed V(t_hi) must agree with the previous
    interval's value (continuity check).  Finally

        Y(t) = E[ξΓ(t,T) | F_t] + ∫ₜᵀ g(t,s)[(α₂, β₂, η₂ν)·V(s) + γ(s)] ds.
    """
    _check_form(form, gamma_mode)
    grid = spec.grid
    M = grid.M
    F = meanfield_F_vector(spec, ens, form, gamma_mode)
    m = spec.levy.n_atoms
    cells = M if delta is None else max(1, int(round(delta / grid.dt)))
    while True:
        ivs = _intervals(M, cells)
        ops = [meanfield_operator(spec, lo, hi, form) for lo, hi in ivs]
        norms = [op.hs_norm() for op in ops]
        if max(norms) <= NORM_TARGET:
            break
        if cells == 1:
            raise IntervalTooLongError(max(norms), grid.dt)
        cells = max(1, cells // 2)

    V = np.full((M + 1) * (2 + m), np.nan)
    n_all = M + 1

    def gather(x, nodes):  # flat-full → flat-local
        parts = [x[nodes], x[n_all + nodes]]
        if m:
            parts.append(x[2 * n_all:].reshape(n_all, m)[nodes].ravel())
        return np.concatenate(parts)

    def scatter(x, local, nodes):
        n = len(nodes)
        x[nodes] = local[:n]
        x[n_all + nodes] = local[n:2 * n]
        if m:
            x3 = x[2 * n_all:].reshape(n_all, m)
            x3[nodes] = local[2 * n:].reshape(n, m)

    Ffull = F.flat()
    jump = 0.0
    for (lo, hi), op in zip(ivs, ops):
        nodes = np.arange(lo, hi + 1)
        Floc = gather(Ffull, nodes)
        if hi < M:
            known = np.arange(hi, M + 1)
            Floc = Floc + _kernel_block(spec, nodes, known, form) @ gather(V, known)
        Fv = MeanFieldVector.from_flat(grid.points[nodes], Floc, m)
        sol = neumann_solve(op, Fv, tol).flat()
        if hi < M:
            old = gather(V, np.array([hi]))
            new = MeanFieldVector.from_flat(grid.points[nodes], sol, m)
            new_hi = np.concatenate([[new.V1[-1]], [new.V2[-1]], new.V3[-1]])
            jump = max(jump, float(np.max(np.abs(new_hi - old))))
            sol_nodes = nodes[:-1]
            sol = gather_local(sol, len(nodes), m, slice(0, len(nodes) - 1))
            scatter(V, sol, sol_nodes)
        else:
            scatter(V, sol, nodes)
    if jump > continuity_tol:
        raise IntervalTooLongError(jump, cells * grid.dt)  # pragma: no cover - indicates a solver bug
    Vvec = MeanFieldVector.from_flat(grid.points.copy(), V, m,
                                     {"form": form, "gamma_mode": gamma_mode, "cells_per_interval": cells})

    Y = None
    if ens is not None:
        B = ens.brownian
        check_ensemble(spec, ens)
        J = _jump_state(ens) if spec.levy else np.zeros_like(B)
        base = closed_form_Y(spec.without_meanfield(), grid.points[None, :], B, J)
        base[:, -1] = spec.xi.value(ens)
        Y = base + _coupling_integral(spec, Vvec)[None, :]
    return MeanFieldSolution(spec, Vvec, F, Y, ivs, norms, jump, form, gamma_mode,
                             None if ens is None else ens.seed, 0 if ens is None else ens.n_paths)


def gather_local(x: np.ndarray, n: int, m: int, sel: slice) -> np.ndarray:
    """Restrict a flat local vector on n nodes to the node slice ``sel``."""
    parts = [x[:n][sel], x[n:2 * n][sel]]
    if m:
        parts.append(x[2 * n:].reshape(n, m)[sel].ravel())
    return np.concatenate(parts)


def _coupling_integral(spec: LinearBSDESpec, V: MeanFieldVector) -> np.ndarray:
    """∫ₜᵀ g(t,s)(α₂V₁ + β₂V₂ + Ση₂V₃ν)(s) ds on the grid (same trapezoid rule as A's first row)."""
    nodes = np.arange(spec.grid.M + 1)
    blk = _kernel_block(spec, nodes, nodes, "corrected")
    return blk[:len(nodes)] @ V.flat()
