"""Linear BSVIEs with jumps and their closed-form solution.

    Y(t) = F(t) + ∫ₜᵀ [Φ(t,s)Y(s) + ξ(s)Z(t,s) + ∫β(s,ζ)K(t,s,ζ)ν(dζ)] ds
           − ∫ₜᵀ Z(t,s) dB(s) − ∫ₜᵀ∫ K(t,s,ζ) Ñ(ds,dζ)

Under dQ = M(T)dP the drift terms in Z and K are absorbed, and

    Y(t) = E_Q[F(t) + ∫ₜᵀ Ψ(t,r)F(r) dr | F_t]

with the resolvent Ψ of Φ.  For free terms that are affine in
B(τ) and J(τ) = ∫₀^τ∫ζ Ñ(ds,dζ) (τ = T, or τ = t "pinned" per t) and
deterministic ξ, β every piece is explicit: Y(s) = Ȳ(s) + B_c(s)B(s) +
C_c(s)J(s), where B_c solves B_c = b + Φ∗B_c (and likewise C_c), and

    Z(t,s)   = 1[τ=T]·b(t) + ∫ₛᵀ Φ(t,r) B_c(r) dr,                 s > t,
    K(t,s,ζ) = ζ·(1[τ=T]·c(t) + ∫ₛᵀ Φ(t,r) C_c(r) dr).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Mapping

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.integrate import trapezoid

from ..chaos_core.grid import TimeGrid
from ..coefficients import JumpFunction, TimeFunction, jump_function, time_function
from ..config import check_keys, parse_coefficient, parse_grid, parse_levy, parse_number, require
from ..errors import ConfigError, DomainError, UnsupportedError
from ..pathwise_mc.ensemble import LevyModel, MCEnsemble, MCEstimate, mc_mean
from ..pathwise_mc.regression import regress_conditional, state_features
from ..reports import CheckReport, jsonable
from ..linear_bsde.spec import _jump_state
from .resolvent import RowEngine, TriangleKernel, VolterraKernel, resolvent_psi, volterra_values

__all__ = [
    "FreeTerm",
    "BSVIESpec",
    "GirsanovChange",
    "girsanov_build",
    "BSVIESolution",
    "bsvie_solve_Y",
    "bsvie_solve_ZK",
    "ZKSolution",
    "BSVIECoefficients",
    "deterministic_residual",
    "ResidualReport",
    "pathwise_residual",
    "smoothness_report",
    "diagonal_check",
    "kernel_from_config",
]

PINS = ("T", "t")
BETA_FLOOR = 1e-8   # the "ε" in β ≥ −1 + ε


@dataclass(frozen=True)
class FreeTerm:
    """F(t) = a(t) + b(t)·B(τ) + c(t)·J(τ), τ = T (``pin="T"``) or τ = t (``pin="t"``)."""

    a: object = 0.0
    b: object = 0.0
    c: object = 0.0
    pin: str = "T"

    def __post_init__(self):
        if self.pin not in PINS:
            raise ValueError(f"pin must be one of {PINS}")

    @property
    def is_deterministic(self) -> bool:
        return _is_zero(self.b) and _is_zero(self.c)

    def to_dict(self) -> dict:
        enc = lambda x: x.tolist() if isinstance(x, np.ndarray) else ("<callable>" if callable(x) else x)
        return {"a": enc(self.a), "b": enc(self.b), "c": enc(self.c), "pin": self.pin}


def _is_zero(x) -> bool:
    return x is None or (np.isscalar(x) and float(x) == 0.0)


@dataclass(frozen=True, eq=False)
class BSVIESpec:
    grid: TimeGrid
    phi: VolterraKernel
    xi_drift: object = 0.0
    beta: object = 0.0
    F: FreeTerm = field(default_factory=FreeTerm)
    levy: LevyModel = field(default_factory=LevyModel)
    p: int = 32          # Chebyshev points per resolvent row
    q: int = 32          # Gauss–Legendre points per convolution
    tol: float = 1e-13   # Neumann truncation tolerance for Ψ

    def __post_init__(self):
        if abs(self.phi.T - self.grid.T) > 1e-12:
            raise ValueError("kernel horizon differs from the grid horizon")
        if not isinstance(self.F, FreeTerm):
            raise UnsupportedError("free term must be a FreeTerm (deterministic or affine in B, J)")
        if not _is_zero(self.F.c) and not self.levy:
            raise ValueError("a jump component in F needs a jump measure")
        if self.levy:
            t = self.grid.points
            x, _ = np.polynomial.legendre.leggauss(8)
            inner = (t[:-1, None] + 0.5 * self.grid.dt * (x + 1.0)).ravel()
            vals = self.f_beta.atom_columns(np.concatenate([t, inner]))
            if np.any(1.0 + vals <= BETA_FLOOR):
                raise DomainError("β must satisfy β ≥ −1 + ε on the grid and all jump atoms")
        if not np.all(np.isfinite(self.f_xi(self.grid.points))):
            raise DomainError("ξ_drift must be finite on the grid")

    # -- coefficient callables ----------------------------------------------
    @cached_property
    def f_xi(self) -> TimeFunction:
        return time_function(self.xi_drift, self.grid)

    @cached_property
    def f_beta(self) -> JumpFunction:
        return jump_function(self.beta, self.levy.zetas, self.grid)

    @cached_property
    def f_a(self) -> TimeFunction:
        return time_function(self.F.a, self.grid)

    @cached_property
    def f_b(self) -> TimeFunction:
        return time_function(self.F.b, self.grid)

    @cached_property
    def f_c(self) -> TimeFunction:
        return time_function(self.F.c, self.grid)

    @cached_property
    def engine(self) -> RowEngine:
        return RowEngine(self.phi, self.p, self.q)

    @cached_property
    def Xi(self):
        """s ↦ ∫₀ˢ ξ (the Q-drift of B)."""
        return self.grid.antiderivative(self.f_xi)

    @cached_property
    def Xi_J(self):
        """s ↦ ∫₀ˢ Σ_j ζ_j β(r, ζ_j) ν_j dr (the Q-drift of J)."""
        if not self.levy:
            return lambda s: np.zeros(np.shape(s))
        zn = self.levy.zetas * self.levy.nus
        return self.grid.antiderivative(lambda r: self.f_beta.atom_columns(r) @ zn)

    def resolvent(self, check_identity: bool = False) -> TriangleKernel:
        return resolvent_psi(self.phi, self.grid, self.tol, self.p, self.q, check_identity)

    def free_term(self, ens: MCEnsemble) -> np.ndarray:
        """F(t_i) along the paths, shape (n_paths, M+1)."""
        t = self.grid.points
        B = ens.brownian
        J = _jump_state(ens) if self.levy else np.zeros_like(B)
        if self.F.pin == "T":
            B, J = B[:, -1:], J[:, -1:]
        return self.f_a(t)[None, :] + self.f_b(t)[None, :] * B + self.f_c(t)[None, :] * J

    # -- config ---------------------------------------------------------------
    _KEYS = {"grid", "kernel", "xi_drift", "beta", "F", "levy", "quadrature"}

    @classmethod
    def from_config(cls, d: Mapping) -> "BSVIESpec":
        check_keys(d, cls._KEYS, "bsvie")
        grid = parse_grid(require(d, "grid", "bsvie"))
        levy = parse_levy(d.get("levy"))
        kernel = kernel_from_config(require(d, "kernel", "bsvie"), grid)
        kw = {}
        for k in ("xi_drift", "beta"):
            if k in d:
                if isinstance(d[k], Mapping):
                    raise UnsupportedError(f"{k}: only deterministic coefficients are supported")
                v = parse_coefficient(d[k], k)
                kw[k] = np.asarray(v, dtype=float) if isinstance(v, list) else v
        Fd = d.get("F", {"a": 0.0})
        check_keys(Fd, {"a", "b", "c", "pin"}, "F")
        fk = {}
        for k in ("a", "b", "c"):
            if k in Fd:
                v = parse_coefficient(Fd[k], f"F.{k}")
                fk[k] = np.asarray(v, dtype=float) if isinstance(v, list) else v
        pin = Fd.get("pin", "T")
        if pin not in PINS:
            raise ConfigError(f"F.pin: expected one of {list(PINS)}, got {pin!r}")
        if "quadrature" in d:
            q = check_keys(d["quadrature"], {"p", "q", "tol"}, "quadrature")
            for key in ("p", "q"):
                if key in q and (isinstance(q[key], bool) or not isinstance(q[key], int) or q[key] < 4):
                    raise ConfigError(f"quadrature.{key}: expected an integer >= 4")
            kw.update({k: q[k] for k in ("p", "q") if k in q})
            if "tol" in q:
                kw["tol"] = parse_number(q["tol"], "quadrature.tol", positive=True)
        try:
            return cls(grid, kernel, F=FreeTerm(pin=pin, **fk), levy=levy, **kw)
        except (ValueError, TypeError) as e:
            if isinstance(e, DomainError):
                raise
            raise ConfigError(str(e)) from e

    def to_dict(self) -> dict:
        enc = lambda x: x.tolist() if isinstance(x, np.ndarray) else ("<callable>" if callable(x) else x)
        return {"grid": self.grid.to_dict(), "kernel": {"preset": self.phi.name, **self.phi.params},
                "xi_drift": enc(self.xi_drift), "beta": enc(self.beta), "F": self.F.to_dict(),
                "levy": self.levy.to_dict(), "quadrature": {"p": self.p, "q": self.q, "tol": self.tol}}


def kernel_from_config(d, grid: TimeGrid) -> VolterraKernel:
    """{"preset": "exp-decay", "rate", "scale"} | {"preset": "constant", "c"} | {"preset": "tabulated", "table"}."""
    if not isinstance(d, Mapping) or "preset" not in d:
        raise ConfigError("kernel: expected an object with a 'preset' key")
    name = d["preset"]
    if name == "exp-decay":
        check_keys(d, {"preset", "rate", "scale"}, "kernel")
        return VolterraKernel.exp_decay(grid.T, parse_number(d.get("rate", 1.0), "kernel.rate"),
                                        parse_number(d.get("scale", 1.0), "kernel.scale"))
    if name == "constant":
        check_keys(d, {"preset", "c"}, "kernel")
        return VolterraKernel.constant(parse_number(require(d, "c", "kernel"), "kernel.c"), grid.T)
    if name == "zero":
        check_keys(d, {"preset"}, "kernel")
        return VolterraKernel.zero(grid.T)
    if name == "tabulated":
        check_keys(d, {"preset", "table"}, "kernel")
        tab = require(d, "table", "kernel")
        try:
            return VolterraKernel.tabulated(grid, np.asarray(tab, dtype=float))
        except ValueError as e:
            raise ConfigError(f"kernel.table: {e}") from e
    raise ConfigError(f"kernel.preset: unknown preset {name!r}; expected exp-decay, constant, zero or tabulated")


# ---------------------------------------------------------------------------
# measure change
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GirsanovChange:
    """dQ = M(T) dP with M(t) = exp(∫ξdB − ½∫ξ²ds + Σ ln(1+β) − ∫∫β ν ds).

    The Brownian part uses forward sums on the grid, so the discrete M is an
    exact martingale and B_Q(t) = B(t) − Σ_{t_i<t} ξ(t_i)Δt has Q-mean zero
    exactly (in expectation); jump terms use the exact jump times.
    """

    logM: np.ndarray = field(repr=False)
    BQ: np.ndarray = field(repr=False)
    JQ: np.ndarray = field(repr=False)
    seed: int | None = None

    @property
    def M(self) -> np.ndarray:
        return np.exp(self.logM)

    @property
    def MT(self) -> np.ndarray:
        return np.exp(self.logM[:, -1])

    def ratio(self, i: int) -> np.ndarray:
        """M(T)/M(t_i)."""
        return np.exp(self.logM[:, -1] - self.logM[:, i])

    def expect_Q(self, x) -> MCEstimate:
        """E_Q[x] = E[M(T)·x]."""
        return mc_mean(x, self.seed, weights=self.MT)

    def sanity(self) -> dict:
        g = self.BQ.shape[1] - 1
        out = {"E[M(T)]": mc_mean(self.MT, self.seed).to_dict(),
               "E_Q[B_Q(T)]": self.expect_Q(self.BQ[:, -1]).to_dict(),
               "E_Q[B_Q(T)^2]": self.expect_Q(self.BQ[:, -1] ** 2).to_dict()}
        return out


def girsanov_build(spec: BSVIESpec, ens: MCEnsemble) -> GirsanovChange:
    if ens.grid != spec.grid:
        raise ValueError("spec and ensemble use different grids")
    if spec.levy and ens.levy != spec.levy:
        raise ValueError("ensemble jump measure differs from the spec's")
    grid = spec.grid
    t = grid.points
    xi = spec.f_xi(t[:-1])
    logM = np.zeros((ens.n_paths, grid.M + 1))
    logM[:, 1:] = np.cumsum(ens.increments * xi - 0.5 * xi * xi * grid.dt, axis=1)
    BQ = ens.brownian - np.concatenate([[0.0], np.cumsum(xi * grid.dt)])[None, :]
    if spec.levy:
        vals = spec.f_beta(ens.jump_time, ens.jump_atom)
        logM += ens.jump_sum_process(np.log1p(vals))
        logM -= grid.cumulative_integral(lambda r: spec.f_beta.atom_columns(r) @ spec.levy.nus)[None, :]
        JQ = _jump_state(ens) - spec.Xi_J(t)[None, :]
    else:
        JQ = np.zeros_like(BQ)
    for a in (logM, BQ, JQ):
        a.setflags(write=False)
    return GirsanovChange(logM, BQ, JQ, ens.seed)


# ---------------------------------------------------------------------------
# closed-form solution
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BSVIECoefficients:
    """Deterministic building blocks: Y(s) = Ȳ(s) + B_c(s)B(s) + C_c(s)J(s)."""

    spec: BSVIESpec
    Ybar: Chebyshev
    Bc: Chebyshev
    Cc: Chebyshev
    degree: int

    @classmethod
    def build(cls, spec: BSVIESpec, degree: int = 48) -> "BSVIECoefficients":
        eng, T = spec.engine, spec.grid.T
        dom = [0.0, T]

        def vv(h):
            return Chebyshev.interpolate(lambda s: volterra_values(eng, h, s, spec.tol), degree, domain=dom)
        Bc = vv(spec.f_b) if not spec.F.is_deterministic or not _is_zero(spec.F.b) else Chebyshev([0.0], domain=dom)
        Cc = vv(spec.f_c) if not _is_zero(spec.F.c) else Chebyshev([0.0], domain=dom)
        Ybar = Chebyshev.interpolate(lambda s: cls._ybar(spec, s, Bc, Cc), degree, domain=dom)
        return cls(spec, Ybar, Bc, Cc, degree)

    @staticmethod
    def _ybar(spec: BSVIESpec, s, Bc, Cc) -> np.ndarray:
        eng, T = spec.engine, spec.grid.T
        A = volterra_values(eng, spec.f_a, s, spec.tol)
        if spec.F.is_deterministic:
            return A
        if spec.F.pin == "T":
            return A + Bc(s) * (spec.Xi(T) - spec.Xi(s)) + Cc(s) * (spec.Xi_J(T) - spec.Xi_J(s))
        # pinned: E_Q[B(r)|F_s] = B(s) + Ξ(r) − Ξ(s) for r ≥ s
        hB = lambda r, t: spec.f_b(r) * (spec.Xi(r) - spec.Xi(t))
        hJ = lambda r, t: spec.f_c(r) * (spec.Xi_J(r) - spec.Xi_J(t))
        return A + volterra_values(eng, (hB, True), s, spec.tol) + volterra_values(eng, (hJ, True), s, spec.tol)


@dataclass(frozen=True, eq=False)
class BSVIESolution:
    spec: BSVIESpec
    Y: np.ndarray | None          # (n_paths, M+1) or None
    Ybar: np.ndarray              # deterministic part Ȳ(t_i) (= Y when F is deterministic)
    coefficients: BSVIECoefficients
    method: str = "closed"
    seed: int | None = None
    n_paths: int = 0
    info: dict = field(default_factory=dict)

    @property
    def grid(self) -> TimeGrid:
        return self.spec.grid

    def table(self) -> list[dict]:
        rows = []
        for i, t in enumerate(self.grid.points):
            row = {"t": t, "Ybar": self.Ybar[i], "Bc": float(self.coefficients.Bc(t)),
                   "Cc": float(self.coefficients.Cc(t))}
            if self.Y is not None:
                row["Y_mc_mean"] = float(self.Y[:, i].mean())
            rows.append(row)
        return rows

    def summary(self) -> dict:
        return jsonable({"seed": self.seed, "n_paths": self.n_paths, "grid": self.grid.to_dict(),
                         "method": self.method, "Y0": self.Ybar[0], "info": self.info})


def bsvie_solve_Y(spec: BSVIESpec, ens: MCEnsemble | None = None, method: str = "closed",
                  basis_degree: int = 2, degree: int = 48) -> BSVIESolution:
    """Y(t) = E_Q[F(t) + ∫ₜᵀΨ(t,r)F(r)dr | F_t] on the grid.

    ``method="closed"`` uses the explicit conditional expectations of the
    affine family; ``method="regression"`` regresses (M(T)/M(t))·X on the
    F_t state, with X = F(t) + ∫Ψ F along each path (Bayes' formula).
    """
    if method not in ("closed", "regression"):
        raise ValueError("method must be 'closed' or 'regression'")
    coef = BSVIECoefficients.build(spec, degree)
    t = spec.grid.points
    Ybar = volterra_values(spec.engine, spec.f_a, t, spec.tol) if spec.F.is_deterministic else coef.Ybar(t)
    info = {"deterministic_F": spec.F.is_deterministic, "pin": spec.F.pin}
    if ens is None:
        if method == "regression":
            raise ValueError("regression needs an ensemble")
        return BSVIESolution(spec, None, Ybar, coef, method, None, 0, info)
    if ens.grid != spec.grid:
        raise ValueError("spec and ensemble use different grids")
    B = ens.brownian
    J = _jump_state(ens) if spec.levy else np.zeros_like(B)
    if method == "closed":
        Y = Ybar[None, :] + coef.Bc(t)[None, :] * B + coef.Cc(t)[None, :] * J
    else:
        Y = _regression_Y(spec, ens, coef, basis_degree)
        info["basis_degree"] = basis_degree
    return BSVIESolution(spec, Y, Ybar, coef, method, ens.seed, ens.n_paths, info)


def _regression_Y(spec: BSVIESpec, ens: MCEnsemble, coef: BSVIECoefficients, basis_degree: int) -> np.ndarray:
    grid = spec.grid
    t = grid.points
    G = girsanov_build(spec, ens)
    Fp = spec.free_term(ens)                                   # (n, M+1) or (n, M+1) via broadcasting
    Fp = np.broadcast_to(Fp, (ens.n_paths, len(t)))
    psi = spec.resolvent().dense()
    Y = np.empty((ens.n_paths, len(t)))
    for i in range(len(t)):
        # ∫_{t_i}^T Ψ(t_i, r)F(r) dr along each path, trapezoid on the grid
        row = psi[i, i:]
        seg = Fp[:, i:] * row[None, :]
        integral = trapezoid(seg, t[i:], axis=1) if len(row) > 1 else np.zeros(ens.n_paths)
        X = Fp[:, i] + integral
        target = G.ratio(i) * X
        if i == 0:
            Y[:, 0] = target.mean()
        else:
            Y[:, i] = regress_conditional(target, t[i], ens, basis_degree).fitted
    return Y


# ---------------------------------------------------------------------------
# Z and K
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ZKSolution:
    """Deterministic Z(t,s), K(t,s,ζ) (s ≥ t) plus U(t) along paths."""

    spec: BSVIESpec
    coefficients: BSVIECoefficients
    Z_grid: TriangleKernel
    K_grid: tuple                 # one TriangleKernel per atom
    U: np.ndarray | None = None

    def Z(self, t, s):
        return _zk(self.spec, self.coefficients.Bc, self.spec.f_b, t, s)

    def K(self, t, s, atom: int):
        z = self.spec.levy.zetas[atom]
        return z * _zk(self.spec, self.coefficients.Cc, self.spec.f_c, t, s)

    def table(self) -> list[dict]:
        rows = self.Z_grid.table()
        for a, kg in enumerate(self.K_grid):
            for row, kr in zip(rows, kg.table()):
                row[f"K_atom{a}"] = kr["value"]
        return [{"t": r["t"], "s": r["r"], "Z": r["value"], **{k: v for k, v in r.items() if k.startswith("K_")}}
                for r in rows]


@lru_cache(maxsize=8)
def _gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _zk(spec: BSVIESpec, coef: Chebyshev, lead: TimeFunction, t, s):
    """1[τ=T]·lead(t) + ∫ₛᵀ Φ(t,r)·coef(r) dr (vectorised over matching t, s)."""
    t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
    T = spec.grid.T
    y, w = _gauss(spec.q)
    L = T - s
    r = s[..., None] + L[..., None] * (y + 1.0) / 2.0
    integral = 0.5 * L * np.sum(w * spec.phi(t[..., None], r) * coef(r), axis=-1)
    base = lead(t) if spec.F.pin == "T" else 0.0
    return base + integral


def bsvie_solve_ZK(spec: BSVIESpec, ens: MCEnsemble | None = None, sol: BSVIESolution | None = None) -> ZKSolution:
    """Z and K from the Malliavin derivatives of the affine family (deterministic ξ, β).

    D_sY(r) = B_c(r) for s ≤ r and D_sF(t) = 1[τ=T] b(t), so the smoothness
    formula Z(t,s) = E_Q[D_sF(t) + ∫ₜᵀΦ(t,r)D_sY(r)dr | F_s] is deterministic.
    With an ensemble, U(t) = F(t) + ∫ₜᵀΦ(t,r)Y(r)dr − Y(t) is also returned
    along the paths (trapezoid in r).
    """
    if sol is None:
        sol = bsvie_solve_Y(spec, ens)
    coef = sol.coefficients
    grid = spec.grid
    pts = grid.points
    zrows = tuple(_zk(spec, coef.Bc, spec.f_b, pts[i], pts[i:]) for i in range(len(pts)))
    krows = tuple(TriangleKernel(grid, tuple(z * _zk(spec, coef.Cc, spec.f_c, pts[i], pts[i:])
                                             for i in range(len(pts))))
                  for z in spec.levy.zetas)
    U = None
    if ens is not None and sol.Y is not None:
        Fp = np.broadcast_to(spec.free_term(ens), sol.Y.shape)
        U = np.empty(sol.Y.shape)
        for i in range(len(pts)):
            seg = sol.Y[:, i:] * spec.phi(pts[i], pts[i:])[None, :]
            integral = trapezoid(seg, pts[i:], axis=1) if len(pts) - i > 1 else 0.0
            U[:, i] = Fp[:, i] + integral - sol.Y[:, i]
    return ZKSolution(spec, coef, TriangleKernel(grid, zrows), krows, U)


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def deterministic_residual(spec: BSVIESpec, times=None, tol: float = 1e-6) -> CheckReport:
    """max_t |Y(t) − F(t) − ∫ₜᵀΦ(t,s)Y(s)ds| for deterministic F (Gauss–Legendre in s)."""
    if not spec.F.is_deterministic:
        raise UnsupportedError("deterministic_residual needs a deterministic free term")
    eng = spec.engine
    t = spec.grid.points if times is None else np.atleast_1d(np.asarray(times, dtype=float))
    Yt = volterra_values(eng, spec.f_a, t, spec.tol)
    y, w = np.polynomial.legendre.leggauss(max(spec.q, 40))
    L = spec.grid.T - t
    s = t[:, None] + L[:, None] * (y + 1.0) / 2.0
    Ys = volterra_values(eng, spec.f_a, s.ravel(), spec.tol).reshape(s.shape)
    integral = 0.5 * L * np.sum(w * spec.phi(np.broadcast_to(t[:, None], s.shape), s) * Ys, axis=1)
    res = Yt - spec.f_a(t) - integral
    dev = float(np.max(np.abs(res)))
    return CheckReport("bsvie deterministic residual", dev, 0.0, tol, dev <= tol,
                       {"times": t, "residual": res, "Y": Yt})


@dataclass(frozen=True)
class ResidualReport:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    rms: np.ndarray
    k_sigma: float = 3.0

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.mean) <= self.k_sigma * self.stderr + 1e-12))

    @property
    def l2(self) -> float:
        return float(np.sqrt(np.mean(self.rms ** 2)))

    def to_dict(self) -> dict:
        return jsonable({"times": self.times, "mean": self.mean, "stderr": self.stderr, "rms": self.rms,
                         "l2": self.l2, "passed": self.passed})


def pathwise_residual(spec: BSVIESpec, ens: MCEnsemble, zk: ZKSolution | None = None,
                      sol: BSVIESolution | None = None, times=None) -> ResidualReport:
    """Per-path residual of the equation with the recovered (Y, Z, K) substituted.

    Deterministic s-integrals use Gauss–Legendre; the zero-mean stochastic
    part of ∫Φ(t,s)Y(s)ds uses the trapezoid rule on the grid; ∫Z dB uses
    forward sums and ∫∫K Ñ the exact jump times.  The residual is therefore
    mean zero and its L² norm is a discretisation error that shrinks with the grid.
    """
    if sol is None:
        sol = bsvie_solve_Y(spec, ens)
    if zk is None:
        zk = bsvie_solve_ZK(spec, ens, sol)
    coef = sol.coefficients
    grid = spec.grid
    pts = grid.points
    idx = range(grid.M) if times is None else [grid.index(x) for x in np.atleast_1d(times)]
    B = ens.brownian
    J = _jump_state(ens) if spec.levy else np.zeros_like(B)
    Fp = np.broadcast_to(spec.free_term(ens), B.shape)
    y, w = np.polynomial.legendre.leggauss(max(spec.q, 32))
    nus, zetas = spec.levy.nus, spec.levy.zetas
    means, ses, rms, tt = [], [], [], []
    for i in idx:
        t = pts[i]
        L = grid.T - t
        s = t + L * (y + 1.0) / 2.0
        phi_s = spec.phi(t, s)
        det = coef.Ybar(s) * phi_s + spec.f_xi(s) * zk.Z(t, s)
        for a in range(len(zetas)):
            det = det + spec.f_beta(s, a) * zk.K(t, s, a) * nus[a]
        det_int = 0.5 * L * np.sum(w * det)
        stoch = (coef.Bc(pts[i:]) * spec.phi(t, pts[i:]))[None, :] * B[:, i:] \
            + (coef.Cc(pts[i:]) * spec.phi(t, pts[i:]))[None, :] * J[:, i:]
        stoch_int = trapezoid(stoch, pts[i:], axis=1)
        zdb = ens.increments[:, i:] @ zk.Z(t, pts[i:-1])
        kn = np.zeros(ens.n_paths)
        if spec.levy:
            sel = ens.jump_time > t
            vals = np.zeros(ens.jump_time.shape)
            # s ↦ K(t, s, ζ)/ζ is smooth on [t, T]: tabulate once per row, evaluate at the jump times
            krow = Chebyshev.interpolate(lambda x: _zk(spec, coef.Cc, spec.f_c, t, x), 40, domain=[t, grid.T])
            for a in range(len(zetas)):
                m = sel & (ens.jump_atom == a)
                vals[m] = zetas[a] * krow(ens.jump_time[m])
            kn = np.bincount(ens.jump_path, weights=vals, minlength=ens.n_paths)
            sq = t + L * (y + 1.0) / 2.0
            comp = sum(0.5 * L * np.sum(w * zk.K(t, sq, a)) * nus[a] for a in range(len(zetas)))
            kn = kn - comp
        R = sol.Y[:, i] - Fp[:, i] - det_int - stoch_int + zdb + kn
        est = mc_mean(R)
        means.append(est.estimate)
        ses.append(est.stderr)
        rms.append(float(np.sqrt(np.mean(R ** 2))))
        tt.append(t)
    return ResidualReport(np.array(tt), np.array(means), np.array(ses), np.array(rms))


def diagonal_check(spec: BSVIESpec, zk: ZKSolution | None = None, tol: float = 1e-8) -> CheckReport:
    """Z(t, t⁺) against D_tY(t⁺) = B_c(t) (the only s at which the diagonal representation is testable).

    Holds for free terms in B(T); for the pinned family D_tF(t) is lost at
    s ↓ t and the gap equals b(t), which is reported in ``details``.
    """
    if zk is None:
        zk = bsvie_solve_ZK(spec)
    t = spec.grid.points[:-1]
    lhs = zk.Z(t, t)
    rhs = zk.coefficients.Bc(t)
    dev = float(np.max(np.abs(lhs - rhs)))
    return CheckReport("Z(t,t+) = D_tY(t+)", lhs, rhs, tol, dev <= tol,
                       {"pin": spec.F.pin, "gap_b": spec.f_b(t) if spec.F.pin == "t" else 0.0})


def smoothness_report(spec: BSVIESpec, zk: ZKSolution | None = None, Ms=None, rel_tol: float = 0.1,
                      fd_step: float = 1e-5) -> dict:
    """Discrete ∫∫(∂Z/∂t)² and ∫∫Σ(∂K/∂t)²ν over the triangle on successive grids.

    ∂/∂t is a central difference of the closed-form Z(t, s).  The report is
    ``finite`` when every sum is finite and ``stable`` when the last two
    refinements agree to ``rel_tol``.
    """
    if zk is None:
        zk = bsvie_solve_ZK(spec)
    M0 = spec.grid.M
    Ms = Ms or (M0, 2 * M0, 4 * M0)
    T = spec.grid.T
    sums = []
    for M in Ms:
        x = np.linspace(0.0, T, M + 1)
        tt, ss = np.meshgrid(x, x, indexing="ij")
        m = ss >= tt
        t, s = tt[m], ss[m]
        tp, tm = np.minimum(t + fd_step, s), np.maximum(t - fd_step, 0.0)
        dZ = (zk.Z(tp, s) - zk.Z(tm, s)) / np.where(tp > tm, tp - tm, 1.0)
        val = np.sum(dZ ** 2)
        for a, nu in enumerate(spec.levy.nus):
            dK = (zk.K(tp, s, a) - zk.K(tm, s, a)) / np.where(tp > tm, tp - tm, 1.0)
            val += nu * np.sum(dK ** 2)
        h = T / M
        sums.append(float(val * h * h))
    finite = all(np.isfinite(sums))
    stable = finite and abs(sums[-1] - sums[-2]) <= rel_tol * max(abs(sums[-1]), 1e-300) \
        if len(sums) > 1 else finite
    return {"M": list(Ms), "sums": sums, "finite": finite, "stable": bool(stable or max(sums) == 0.0)}
