"""Optimal consumption from a cash flow with memory (stochastic Volterra state).

    X(t) = x₀ + ∫₀ᵗ [b₀(t,s)X(s) − u(s)] ds + ∫₀ᵗ σ₀(s)X(s) dB(s) + ∫₀ᵗ∫ γ₀(s,ζ)X(s) Ñ(ds,dζ),
    J(u) = E[θX(T) + ∫₀ᵀ log u(t) dt].

The SVIE Hamiltonian is ℋ = H⁰ + H¹ with
H⁰ = log u + p(t)(b₀(t,t)x − u) + q(t,t)σ₀(t)x + ∫r(t,t,ζ)γ₀(t,ζ)x ν(dζ) and
H¹ = ∫ₜᵀ p(s)∂₁b₀(s,t)x ds.  The adjoint BSVIE

    p(t) = θ + ∫ₜᵀ ∂ℋ/∂x(s) ds − ∫ₜᵀ q(t,s) dB(s) − ∫ₜᵀ∫ r(t,s,ζ) Ñ(ds,dζ)

is linear; after Fubini its p-kernel is Φ(t,z) = b₀(z,z) + ∫ₜᶻ ∂₁b₀(z,s) ds,
and the q, r terms enter with coefficients σ₀, γ₀.  ∂ℋ/∂u = 1/u − p, so
û = 1/p̂ wherever p̂ > 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.integrate import trapezoid

from ..chaos_core.grid import TimeGrid
from ..coefficients import jump_function, time_function
from ..config import check_keys, parse_coefficient, parse_grid, parse_levy, parse_number, require
from ..errors import ConfigError, DomainError, InfeasibleError
from ..linear_bsde.spec import TerminalDescriptor, _jump_state
from ..pathwise_mc.ensemble import LevyModel, MCEnsemble, MCEstimate, mc_mean
from ..reports import jsonable
from ..bsvie.resolvent import VolterraKernel
from ..bsvie.solver import BSVIESolution, BSVIESpec, FreeTerm, bsvie_solve_Y

__all__ = [
    "SVIEControlSpec",
    "InfeasibleControlError",
    "CashflowResult",
    "svie_hamiltonian",
    "adjoint_spec",
    "cashflow_solve",
    "simulate_cashflow",
    "degenerate_value",
]


class InfeasibleControlError(InfeasibleError):
    """p̂ ≤ 0 on a region of positive measure: log utility has no interior optimum there."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True, eq=False)
class SVIEControlSpec:
    grid: TimeGrid
    b0: Callable = None                 # b₀(t, s), vectorised; None → 0
    sigma0: object = 0.0                # σ₀(s)
    gamma0: object = 0.0                # γ₀(s, ζ)
    x0: float = 1.0
    theta: TerminalDescriptor = field(default_factory=lambda: TerminalDescriptor(1.0))
    levy: LevyModel = field(default_factory=LevyModel)
    db0: Callable | None = None         # ∂b₀/∂t(t, s); central differences when omitted
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.b0 is None:
            object.__setattr__(self, "b0", lambda t, s: np.zeros(np.broadcast(t, s).shape))
            object.__setattr__(self, "db0", lambda t, s: np.zeros(np.broadcast(t, s).shape))
        if isinstance(self.theta, Mapping):
            object.__setattr__(self, "theta", TerminalDescriptor.from_config(self.theta))
        if self.levy:
            g = jump_function(self.gamma0, self.levy.zetas, self.grid).atom_columns(self.grid.points)
            if np.any(1.0 + g <= 1e-8):
                raise DomainError("γ₀ must satisfy γ₀ ≥ −1 + ε")

    @property
    def T(self) -> float:
        return self.grid.T

    def b0_t(self, t, s):
        """∂b₀/∂t (first argument)."""
        if self.db0 is not None:
            return np.asarray(self.db0(t, s), dtype=float) * np.ones(np.broadcast(t, s).shape)
        h = self.fd_step
        return (np.asarray(self.b0(t + h, s)) - np.asarray(self.b0(t - h, s))) / (2 * h)

    @property
    def f_sigma0(self):
        return time_function(self.sigma0, self.grid)

    @property
    def f_gamma0(self):
        return jump_function(self.gamma0, self.levy.zetas, self.grid)

    def kernel(self, nodes: int = 16) -> VolterraKernel:
        """Φ(t, z) = b₀(z, z) + ∫ₜᶻ ∂₁b₀(z, s) ds (Gauss–Legendre in s)."""
        y, w = np.polynomial.legendre.leggauss(nodes)

        def phi(t, z):
            t, z = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(z, dtype=float))
            L = z - t
            s = t[..., None] + L[..., None] * (y + 1.0) / 2.0
            inner = 0.5 * L * np.sum(w * self.b0_t(z[..., None], s), axis=-1)
            return np.asarray(self.b0(z, z), dtype=float) + inner
        return VolterraKernel(phi, self.T, "cashflow-adjoint")

    # -- config ----------------------------------------------------------------
    _KEYS = {"grid", "b0", "sigma0", "gamma0", "x0", "theta", "levy"}

    @classmethod
    def from_config(cls, d: Mapping) -> "SVIEControlSpec":
        """b0 is {"const": c} | {"a": a, "k": k} meaning b₀(t,s) = a·exp(−k(t−s)), or omitted."""
        check_keys(d, cls._KEYS, "cashflow")
        grid = parse_grid(require(d, "grid", "cashflow"))
        levy = parse_levy(d.get("levy"))
        b0 = db0 = None
        if "b0" in d:
            bd = d["b0"]
            if not isinstance(bd, Mapping):
                raise ConfigError("cashflow.b0: expected {\"const\": c} or {\"a\": a, \"k\": k}")
            if "const" in bd:
                check_keys(bd, {"const"}, "cashflow.b0")
                c = parse_number(bd["const"], "cashflow.b0.const")
                b0 = lambda t, s, c=c: c * np.ones(np.broadcast(t, s).shape)
                db0 = lambda t, s: np.zeros(np.broadcast(t, s).shape)
            else:
                check_keys(bd, {"a", "k"}, "cashflow.b0")
                a = parse_number(require(bd, "a", "cashflow.b0"), "cashflow.b0.a")
                k = parse_number(bd.get("k", 0.0), "cashflow.b0.k")
                b0 = lambda t, s, a=a, k=k: a * np.exp(-k * (np.asarray(t) - np.asarray(s)))
                db0 = lambda t, s, a=a, k=k: -k * a * np.exp(-k * (np.asarray(t) - np.asarray(s)))
        kw = {}
        for key in ("sigma0", "gamma0"):
            if key in d:
                v = parse_coefficient(d[key], f"cashflow.{key}")
                kw[key] = np.asarray(v, dtype=float) if isinstance(v, list) else v
        theta = TerminalDescriptor.from_config(d.get("theta", {"c0": 1.0}))
        x0 = parse_number(d.get("x0", 1.0), "cashflow.x0")
        try:
            return cls(grid, b0, x0=x0, theta=theta, levy=levy, db0=db0, **kw)
        except ValueError as e:
            if isinstance(e, DomainError):
                raise
            raise ConfigError(str(e)) from e


def svie_hamiltonian(spec: SVIEControlSpec, t: float, x, u, p: Callable, q: Callable | None = None,
                     r: Callable | None = None, n_quad: int = 65):
    """ℋ(t, x, u) = H⁰ + H¹ for the cash-flow problem.

    ``p(s)``, ``q(s, t)``, ``r(s, t, atom)`` are callables; H¹ = ∫ₜᵀ p(s)∂₁b₀(s,t)x ds
    uses the trapezoid rule with ``n_quad`` points (σ₀, γ₀ carry no first
    time argument, so their H¹ terms vanish).
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    q = q or (lambda s, tt: 0.0)
    r = r or (lambda s, tt, a: 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        H0 = np.log(u) + p(t) * (spec.b0(t, t) * x - u) + q(t, t) * spec.f_sigma0(t) * x
    for a, nu in enumerate(spec.levy.nus):
        H0 = H0 + r(t, t, a) * spec.f_gamma0(t, a) * x * nu
    if t < spec.T:
        s = np.linspace(t, spec.T, n_quad)
        vals = np.array([p(si) for si in s]) * spec.b0_t(s, t)
        H1 = trapezoid(vals, s) * x
    else:
        H1 = 0.0 * x
    return H0 + H1


def adjoint_spec(spec: SVIEControlSpec, **quad) -> BSVIESpec:
    """The adjoint equation as a linear BSVIE: kernel Φ, drift σ₀, jump tilt γ₀, free term θ."""
    th = spec.theta
    return BSVIESpec(spec.grid, spec.kernel(), xi_drift=spec.sigma0, beta=spec.gamma0,
                     F=FreeTerm(th.c0, th.cB, th.cN, "T"), levy=spec.levy, **quad)


def simulate_cashflow(spec: SVIEControlSpec, ens: MCEnsemble, u: np.ndarray) -> np.ndarray:
    """Left-point scheme for the Volterra state with control u (n, M+1)."""
    grid = spec.grid
    h, M, t = grid.dt, grid.M, grid.points
    sig = spec.f_sigma0(t[:-1])
    noise = sig[None, :] * ens.increments
    if spec.levy:
        g = spec.f_gamma0
        cum = ens.jump_sum_process(g(ens.jump_time, ens.jump_atom))
        comp = grid.cumulative_integral(lambda s: g.atom_columns(s) @ spec.levy.nus)
        noise = noise + np.diff(cum - comp[None, :], axis=1)
    X = np.empty((ens.n_paths, M + 1))
    X[:, 0] = spec.x0
    stoch = np.zeros(ens.n_paths)
    for i in range(1, M + 1):
        stoch += X[:, i - 1] * noise[:, i - 1]
        bw = spec.b0(t[i], t[:i]) * h
        X[:, i] = spec.x0 + X[:, :i] @ bw - h * u[:, :i].sum(axis=1) + stoch
    return X


@dataclass(frozen=True, eq=False)
class CashflowResult:
    spec: SVIEControlSpec
    u: np.ndarray
    p: np.ndarray
    X: np.ndarray
    J: MCEstimate
    first_order_residual: float
    adjoint: BSVIESolution
    concavity: dict
    seed: int | None = None
    n_paths: int = 0

    def table(self) -> list[dict]:
        return [{"t": t, "mean_u": float(self.u[:, i].mean()), "mean_X": float(self.X[:, i].mean()),
                 "mean_p": float(self.p[:, i].mean())} for i, t in enumerate(self.spec.grid.points)]

    def summary(self) -> dict:
        return jsonable({"seed": self.seed, "n_paths": self.n_paths, "J": self.J.to_dict(),
                         "first_order_residual": self.first_order_residual, "concavity": self.concavity})


def degenerate_value(c: float, x0: float, T: float) -> float:
    """J for b₀ = σ₀ = γ₀ = 0, θ = c > 0: û = 1/c and J = c·x₀ − T(1 + ln c)."""
    return c * x0 - T * (1.0 + np.log(c))


def cashflow_solve(spec: SVIEControlSpec, ens: MCEnsemble, **quad) -> CashflowResult:
    """Solve the adjoint BSVIE in closed form, set û = 1/p̂ and estimate J.

    Raises :class:`InfeasibleControlError` if p̂ ≤ 0 on any grid time of any
    path before T (log utility needs u > 0).
    """
    adj = adjoint_spec(spec, **quad)
    sol = bsvie_solve_Y(adj, ens)
    p = sol.Y
    bad = p[:, :-1] <= 0.0
    if np.any(bad):
        frac = float(bad.mean())
        raise InfeasibleControlError(f"adjoint p̂ ≤ 0 on {frac:.3%} of (path, time) pairs; log utility infeasible",
                                     {"fraction_nonpositive": frac, "min_p": float(p.min())})
    u = 1.0 / p
    X = simulate_cashflow(spec, ens, u)
    th = spec.theta
    theta = th.c0 + th.cB * ens.brownian[:, -1]
    if th.cN:
        theta = theta + th.cN * _jump_state(ens)[:, -1]
    vals = theta * X[:, -1] + np.sum(np.log(u[:, :-1]), axis=1) * spec.grid.dt
    J = mc_mean(vals, ens.seed)
    resid = float(np.max(np.abs(1.0 / u - p)))
    concavity = {"f=log u strictly concave in u": True, "g(x)=θx concave (linear) in x": True,
                 "H concave in (x,u)": True, "sufficient_maximum_principle_applies": True}
    return CashflowResult(spec, u, p, X, J, resid, sol, concavity, ens.seed, ens.n_paths)
