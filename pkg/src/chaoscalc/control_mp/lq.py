"""Constrained linear-quadratic control of a jump diffusion.

    dX = u dt + σ dB + ∫γ(ζ) Ñ(dt,dζ),  X(0) = x₀,
    J(u) = E[−½X(T)² − ½∫₀ᵀ u(t)² dt],   u ≥ 0 (constrained) or u ∈ ℝ.

The maximum principle gives û = max(p̂, 0) with p̂(t) = −E[X̂(T)|F_t], a
coupled forward–backward system solved here by damped Picard iteration on
regression-fitted feedback policies.  Without the constraint the optimal
feedback is u*(t) = −X(t)/(T+1−t) and J* = −½[x₀²/(T+1) + (σ² + Σγ²ν)ln(T+1)].
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..chaos_core.grid import TimeGrid
from ..config import check_keys, parse_grid, parse_levy, parse_number, require
from ..errors import ConfigError
from ..pathwise_mc.ensemble import LevyModel, MCEnsemble, MCEstimate, mc_mean
from ..reports import jsonable

__all__ = [
    "ControlProblemLQ",
    "ControlIterate",
    "PolicyCoefficients",
    "simulate_lq",
    "lq_objective",
    "lq_solve",
    "unconstrained_benchmark",
    "analytic_value",
    "adjoint_regression",
    "stationarity_check",
    "StationarityReport",
    "perturbation_test",
]


@dataclass(frozen=True)
class ControlProblemLQ:
    x0: float
    sigma: float
    grid: TimeGrid
    gamma: tuple = ()              # γ(ζ_j) per atom
    levy: LevyModel = field(default_factory=LevyModel)
    constrained: bool = True

    def __post_init__(self):
        g = tuple(float(v) for v in self.gamma)
        object.__setattr__(self, "gamma", g)
        if len(g) != self.levy.n_atoms:
            raise ValueError(f"gamma needs one value per jump atom ({self.levy.n_atoms}), got {len(g)}")
        if not all(np.isfinite(g)) or not np.isfinite(self.sigma) or not np.isfinite(self.x0):
            raise ValueError("x0, sigma and gamma must be finite")

    @property
    def T(self) -> float:
        return self.grid.T

    @property
    def nus(self) -> np.ndarray:
        return self.levy.nus

    @property
    def jump_variance_rate(self) -> float:
        return float(np.sum(np.asarray(self.gamma) ** 2 * self.levy.nus)) if self.levy else 0.0

    # Hamiltonian ingredients: H = −½u² + up + σq + Σγ r ν
    def f(self, t, x, u):
        return -0.5 * np.asarray(u, dtype=float) ** 2

    def b(self, t, x, u):
        return np.asarray(u, dtype=float)

    def sigma_fn(self, t, x, u):
        return self.sigma * np.ones(np.shape(np.asarray(u, dtype=float)))

    def gamma_fn(self, t, x, u):
        return np.broadcast_to(np.asarray(self.gamma), np.shape(np.asarray(u, dtype=float)) + (len(self.gamma),))

    _KEYS = {"x0", "sigma", "gamma", "constrained", "grid", "levy"}

    @classmethod
    def from_config(cls, d: Mapping) -> "ControlProblemLQ":
        check_keys(d, cls._KEYS, "lq")
        grid = parse_grid(d["grid"]) if "grid" in d else TimeGrid(1.0, 64)
        levy = parse_levy(d.get("levy"))
        gam = d.get("gamma", [])
        if not isinstance(gam, list):
            raise ConfigError("lq.gamma: expected a list with one value per jump atom")
        gam = tuple(parse_number(v, f"lq.gamma[{i}]") for i, v in enumerate(gam))
        con = d.get("constrained", True)
        if not isinstance(con, bool):
            raise ConfigError("lq.constrained: expected true/false")
        try:
            return cls(parse_number(require(d, "x0", "lq"), "lq.x0"), parse_number(d.get("sigma", 0.0), "lq.sigma"),
                       grid, gam, levy, con)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def to_dict(self) -> dict:
        return {"x0": self.x0, "sigma": self.sigma, "gamma": list(self.gamma), "constrained": self.constrained,
                "grid": self.grid.to_dict(), "levy": self.levy.to_dict()}


# Protocol adaptor so that control_mp.hamiltonian can be used directly
class _LQCoefficients:
    def __init__(self, pb: ControlProblemLQ):
        self.pb = pb
        self.nus = pb.nus
        self.f, self.b = pb.f, pb.b
        self.sigma, self.gamma = pb.sigma_fn, pb.gamma_fn


def coefficients(pb: ControlProblemLQ) -> _LQCoefficients:
    return _LQCoefficients(pb)


def analytic_value(pb: ControlProblemLQ) -> float:
    """J(u*) for the unconstrained problem in continuous time."""
    T = pb.T
    return -0.5 * (pb.x0 ** 2 / (T + 1.0) + (pb.sigma ** 2 + pb.jump_variance_rate) * np.log(T + 1.0))


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def _noise(pb: ControlProblemLQ, ens: MCEnsemble):
    """Per-cell noise σΔB + Σγ ΔÑ and the jump-count state N(t_i)."""
    if ens.grid != pb.grid:
        raise ValueError("problem and ensemble use different grids")
    dW = pb.sigma * ens.increments
    n = np.zeros((ens.n_paths, pb.grid.M + 1))
    if pb.levy:
        if ens.levy != pb.levy:
            raise ValueError("ensemble jump measure differs from the problem's")
        g = np.asarray(pb.gamma)
        cum = ens.jump_sum_process(g[ens.jump_atom])
        comp = pb.grid.points * float(g @ pb.levy.nus)
        dW = dW + np.diff(cum - comp[None, :], axis=1)
        n = ens.jump_sum_process(np.ones(len(ens.jump_atom)))
    return dW, n


def simulate_lq(pb: ControlProblemLQ, ens: MCEnsemble, policy: Callable[[int, np.ndarray, np.ndarray], np.ndarray]):
    """Euler scheme under a feedback policy u_i = policy(i, X_i, N_i); returns (X, u), both (n, M+1)."""
    dW, N = _noise(pb, ens)
    h = pb.grid.dt
    M = pb.grid.M
    X = np.empty((ens.n_paths, M + 1))
    U = np.empty((ens.n_paths, M + 1))
    X[:, 0] = pb.x0
    for i in range(M + 1):
        U[:, i] = policy(i, X[:, i], N[:, i])
        if i < M:
            X[:, i + 1] = X[:, i] + U[:, i] * h + dW[:, i]
    return X, U


def lq_objective(pb: ControlProblemLQ, X: np.ndarray, U: np.ndarray, seed=None) -> MCEstimate:
    """J = E[−½X(T)² − ½Σ u_i² Δt] (left-point rule, matching the Euler scheme)."""
    vals = -0.5 * X[:, -1] ** 2 - 0.5 * np.sum(U[:, :-1] ** 2, axis=1) * pb.grid.dt
    return mc_mean(vals, seed)


# ---------------------------------------------------------------------------
# regression of the adjoint
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolicyCoefficients:
    """Per-grid-time coefficients on the basis [1, X, X², …, X^degree] (+ N(t) with jumps)."""

    degree: int
    with_jumps: bool
    coef: np.ndarray      # (M+1, n_basis)

    @property
    def n_basis(self) -> int:
        return self.degree + 1 + int(self.with_jumps)

    def design(self, X: np.ndarray, N: np.ndarray | None) -> np.ndarray:
        A = np.empty((len(X), self.n_basis))
        A[:, 0] = 1.0
        for k in range(1, self.degree + 1):
            A[:, k] = A[:, k - 1] * X
        if self.with_jumps:
            A[:, -1] = N
        return A

    def value(self, i: int, X: np.ndarray, N: np.ndarray | None) -> np.ndarray:
        return self.design(X, N) @ self.coef[i]


def _lstsq(A: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least squares via column-scaled normal equations, dropping (near-)constant columns."""
    scale = np.max(np.abs(A), axis=0)
    keep = np.ones(A.shape[1], dtype=bool)
    sd = A[:, 1:].std(axis=0)
    keep[1:] = sd > 1e-10 * np.maximum(scale[1:], 1e-300)
    As = A[:, keep] / scale[keep]
    G = As.T @ As
    c = np.zeros(A.shape[1])
    try:
        sol = np.linalg.solve(G, As.T @ y)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(As, y, rcond=1e-12)
    c[keep] = sol / scale[keep]
    return c


def adjoint_regression(pb: ControlProblemLQ, X: np.ndarray, N: np.ndarray, degree: int = 3):
    """p̂(t_i) = −E[X(T) | X(t_i), N(t_i)] by least squares; returns (fitted (n, M+1), PolicyCoefficients)."""
    pc = PolicyCoefficients(degree, bool(pb.levy), np.zeros((pb.grid.M + 1, degree + 1 + int(bool(pb.levy)))))
    target = -X[:, -1]
    fitted = np.empty(X.shape)
    for i in range(X.shape[1]):
        A = pc.design(X[:, i], N[:, i] if pb.levy else None)
        pc.coef[i] = _lstsq(A, target)
        fitted[:, i] = A @ pc.coef[i]
    return fitted, pc


# ---------------------------------------------------------------------------
# Picard iteration
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ControlIterate:
    problem: ControlProblemLQ
    u: np.ndarray          # (n, M+1), control actually applied
    X: np.ndarray
    p: np.ndarray          # p̂ regressed under the final control
    policy: PolicyCoefficients
    iteration: int
    converged: bool
    sup_change: tuple
    J_history: tuple       # MCEstimate per iteration
    J: MCEstimate
    seed: int | None = None
    n_paths: int = 0

    def table(self) -> list[dict]:
        return [{"t": t, "mean_u": float(self.u[:, i].mean()), "mean_X": float(self.X[:, i].mean()),
                 "mean_p": float(self.p[:, i].mean())} for i, t in enumerate(self.problem.grid.points)]

    def iterations_table(self) -> list[dict]:
        return [{"iteration": k, "J": j.estimate, "stderr": j.stderr,
                 "sup_change": (self.sup_change[k - 1] if k >= 1 else None)}
                for k, j in enumerate(self.J_history)]

    def monotone_improvement(self, k: float = 3.0) -> bool:
        """J(u^m) non-decreasing within k·σ along the iterations (diagnostic)."""
        J = self.J_history
        return all(J[m + 1].estimate >= J[m].estimate - k * np.hypot(J[m].stderr, J[m + 1].stderr)
                   for m in range(len(J) - 1))

    def summary(self) -> dict:
        return jsonable({"seed": self.seed, "n_paths": self.n_paths, "iterations": self.iteration,
                         "converged": self.converged, "J": self.J.to_dict(),
                         "sup_change": list(self.sup_change), "problem": self.problem.to_dict()})


def _apply(pb: ControlProblemLQ, P: np.ndarray) -> np.ndarray:
    return np.maximum(P, 0.0) if pb.constrained else P


def lq_solve(pb: ControlProblemLQ, ens: MCEnsemble, max_iter: int = 40, tol: float = 2e-3,
             damping: float = 0.5, degree: int = 3) -> ControlIterate:
    """Damped Picard iteration: u⁰ = 0; p^m = −E[X^m(T)|F_t]; P^{m+1} = (1−λ)P^m + λ p^m; u^{m+1} = max(P^{m+1}, 0).

    Damping acts on the fitted policy coefficients, so every iterate is an
    exact feedback function u = max(P(t, X, N), 0) ≥ 0.  Stops when the
    largest (over grid times) RMS change of u between iterations is below
    ``tol``; otherwise warns and returns the last iterate.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must be in (0, 1]")
    _, N = _noise(pb, ens)
    P = PolicyCoefficients(degree, bool(pb.levy), np.zeros((pb.grid.M + 1, degree + 1 + int(bool(pb.levy)))))

    def policy_of(pc):
        return lambda i, x, n: _apply(pb, pc.value(i, x, n if pb.levy else None))

    X, U = simulate_lq(pb, ens, policy_of(P))
    J_hist = [lq_objective(pb, X, U, ens.seed)]
    changes = []
    converged = False
    for m in range(1, max_iter + 1):
        _, pc = adjoint_regression(pb, X, N, degree)
        P = PolicyCoefficients(degree, P.with_jumps, (1.0 - damping) * P.coef + damping * pc.coef)
        X_new, U_new = simulate_lq(pb, ens, policy_of(P))
        change = float(np.max(np.sqrt(np.mean((U_new[:, :-1] - U[:, :-1]) ** 2, axis=0))))
        changes.append(change)
        X, U = X_new, U_new
        J_hist.append(lq_objective(pb, X, U, ens.seed))
        if change < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"lq_solve: no convergence after {max_iter} iterations; sup-change trajectory {changes}",
                      RuntimeWarning, stacklevel=2)
    p_fit, _ = adjoint_regression(pb, X, N, degree)
    return ControlIterate(pb, U, X, p_fit, P, len(changes), converged, tuple(changes), tuple(J_hist),
                          J_hist[-1], ens.seed, ens.n_paths)


def unconstrained_benchmark(pb: ControlProblemLQ, ens: MCEnsemble, degree: int = 3) -> ControlIterate:
    """Closed-loop u*(t) = −X(t)/(T+1−t), with its J estimate and regressed adjoint."""
    T = pb.T
    t = pb.grid.points
    X, U = simulate_lq(pb, ens, lambda i, x, n: -x / (T + 1.0 - t[i]))
    _, N = _noise(pb, ens)
    p_fit, pc = adjoint_regression(pb, X, N, degree)
    J = lq_objective(pb, X, U, ens.seed)
    return ControlIterate(pb, U, X, p_fit, pc, 0, True, (), (J,), J, ens.seed, ens.n_paths)


# ---------------------------------------------------------------------------
# maximum-principle checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StationarityReport:
    times: np.ndarray
    v_grid: np.ndarray
    products: np.ndarray        # (n_times, n_v) E[(−û + p̂)(v − û)]
    stderr: np.ndarray
    interior_max: np.ndarray    # max-abs-mean of −û + p̂ where û > 0, per t
    boundary_mean: np.ndarray   # mean of p̂ where û = 0, per t (nan if none)
    boundary_stderr: np.ndarray
    interior_tol: float
    mean_abs_dv: np.ndarray     # (n_times, n_v) E|v − û|, scales the regression tolerance
    k_sigma: float = 3.0

    @property
    def variational_ok(self) -> np.ndarray:
        slack = self.interior_tol * self.mean_abs_dv
        return np.all(self.products <= self.k_sigma * self.stderr + slack + 1e-12, axis=1)

    @property
    def interior_ok(self) -> np.ndarray:
        return np.nan_to_num(self.interior_max, nan=0.0) <= self.interior_tol

    @property
    def boundary_ok(self) -> np.ndarray:
        m = np.nan_to_num(self.boundary_mean, nan=-np.inf)
        return m <= self.k_sigma * np.nan_to_num(self.boundary_stderr, nan=0.0) + self.interior_tol

    @property
    def passed(self) -> bool:
        return bool(np.all(self.variational_ok & self.interior_ok & self.boundary_ok))

    def to_dict(self) -> dict:
        return jsonable({"times": self.times, "v_grid": self.v_grid, "products": self.products,
                         "stderr": self.stderr, "interior_max": self.interior_max,
                         "boundary_mean": self.boundary_mean, "passed": self.passed,
                         "failing_times": self.times[~(self.variational_ok & self.interior_ok & self.boundary_ok)]})


def stationarity_check(it: ControlIterate, v_grid=(0.0, 0.25, 0.5, 1.0, 2.0), interior_tol: float = 0.02,
                       k_sigma: float = 3.0) -> StationarityReport:
    """Necessary-condition check (−û + p̂)(v − û) ≤ 0 in mean, per grid time (t < T).

    The product may exceed 0 by k·σ plus ``interior_tol``·E|v − û|, the
    latter accounting for the regression error in p̂.

    Interior stationarity: where û > 0 the conditional mean of −û + p̂ (binned
    by deciles of û) must vanish to ``interior_tol``.  Boundary: where û = 0
    the mean of p̂ must be ≤ 0 within k·σ (plus the same tolerance).
    """
    v = np.asarray(v_grid, dtype=float)
    M = it.problem.grid.M
    u, p = it.u[:, :M], it.p[:, :M]
    g = p - u
    prods = np.empty((M, len(v)))
    ses = np.empty((M, len(v)))
    mdv = np.empty((M, len(v)))
    imax = np.full(M, np.nan)
    bmean = np.full(M, np.nan)
    bse = np.full(M, np.nan)
    for i in range(M):
        for j, vv in enumerate(v):
            e = mc_mean(g[:, i] * (vv - u[:, i]))
            prods[i, j], ses[i, j] = e.estimate, e.stderr
            mdv[i, j] = np.mean(np.abs(vv - u[:, i]))
        pos = u[:, i] > 0
        if pos.sum() >= 10:
            # conditional means over deciles of û
            ui, gi = u[pos, i], g[pos, i]
            edges = np.quantile(ui, np.linspace(0, 1, 11))
            bins = np.clip(np.searchsorted(edges, ui, side="right") - 1, 0, 9)
            means = [gi[bins == b].mean() for b in range(10) if np.any(bins == b)]
            imax[i] = float(np.max(np.abs(means)))
        zero = ~pos
        if zero.sum() >= 2:
            e = mc_mean(p[zero, i])
            bmean[i], bse[i] = e.estimate, e.stderr
    return StationarityReport(it.problem.grid.points[:M], v, prods, ses, imax, bmean, bse, interior_tol, mdv, k_sigma)


def perturbation_test(it: ControlIterate, ens: MCEnsemble, n_perturb: int = 10, eps: float = 0.1,
                      seed: int = 0, k_sigma: float = 3.0) -> dict:
    """J(û) ≥ J(û + ε v_k) within k·σ (paired) for random admissible v_k ≥ 0."""
    pb = it.problem
    rng = np.random.default_rng(seed)
    t = pb.grid.points
    base = lambda i, x, n: _apply(pb, it.policy.value(i, x, n if pb.levy else None))
    X0, U0 = simulate_lq(pb, ens, base)
    v0 = -0.5 * X0[:, -1] ** 2 - 0.5 * np.sum(U0[:, :-1] ** 2, axis=1) * pb.grid.dt
    rows = []
    for k in range(n_perturb):
        a, b, c = rng.uniform(0.0, 1.0, 3)
        vk = a + b * t / pb.T + c * np.sin(np.pi * t / pb.T)      # ≥ 0 keeps u ≥ 0 admissible
        sign = 1.0 if pb.constrained else rng.choice([-1.0, 1.0])
        pol = lambda i, x, n, vk=vk, sign=sign: base(i, x, n) + sign * eps * vk[i]
        X1, U1 = simulate_lq(pb, ens, pol)
        v1 = -0.5 * X1[:, -1] ** 2 - 0.5 * np.sum(U1[:, :-1] ** 2, axis=1) * pb.grid.dt
        d = mc_mean(v0 - v1)
        rows.append({"k": k, "J_diff": d.estimate, "stderr": d.stderr, "ok": d.estimate >= -k_sigma * d.stderr})
    return {"eps": eps, "rows": rows, "passed": all(r["ok"] for r in rows)}
