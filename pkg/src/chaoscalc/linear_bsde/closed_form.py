"""Stochastic exponential Γ(t,s) and the closed formula for linear BSDEs."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import UnsupportedError
from ..pathwise_mc.ensemble import MCEnsemble, mc_mean
from ..pathwise_mc.regression import regress_conditional, state_features
from ..reports import jsonable
from .spec import LinearBSDESpec, _jump_state

__all__ = [
    "GammaPaths",
    "check_ensemble",
    "gamma_paths",
    "gamma_path",
    "LinearBSDESolution",
    "linear_bsde_solve",
    "closed_form_Y",
    "regression_crosscheck",
    "RepresentationReport",
    "representation_check",
]


@dataclass(frozen=True, eq=False)
class GammaPaths:
    """log Γ(0, t_i) per path; Γ(t, s) = exp(logG(s) − logG(t)).

    The Brownian part is the forward sum Σ β₁(t_i)ΔB_i − ½Σ β₁(t_i)²Δt, whose
    exponential is an exact discrete martingale; the jump part uses the exact
    jump times, Σ ln(1 + η₁(τ, ζ)) − ∫∫ η₁ dν dr.  Hence E[Γ(t,s)] = exp∫α₁
    with no time-discretisation bias, and Γ is multiplicative by construction.
    """

    spec: LinearBSDESpec
    ens: MCEnsemble
    log: np.ndarray = field(repr=False)

    def __call__(self, t: float, s: float) -> np.ndarray:
        g = self.ens.grid
        return np.exp(self.log[:, g.index(s)] - self.log[:, g.index(t)])

    def between(self, i: int, j: int) -> np.ndarray:
        return np.exp(self.log[:, j] - self.log[:, i])


def gamma_paths(spec: LinearBSDESpec, ens: MCEnsemble) -> GammaPaths:
    grid = ens.grid
    check_ensemble(spec, ens)
    cache = ens.__dict__.setdefault("_gamma_cache", {})
    key = id(spec)
    if key in cache and cache[key][0] is spec:
        return cache[key][1]
    t = grid.points
    b = spec.f_beta1(t[:-1])
    logG = np.zeros((ens.n_paths, grid.M + 1))
    logG[:, 1:] = np.cumsum(ens.increments * b - 0.5 * b * b * grid.dt, axis=1)
    logG += spec.L_alpha(t)[None, :]
    if spec.levy:
        f = spec.f_eta1
        logG += ens.jump_sum_process(np.log1p(f(ens.jump_time, ens.jump_atom)))
        nus = ens.levy.nus
        logG -= grid.cumulative_integral(lambda r: f.atom_columns(r) @ nus)[None, :]
    logG.setflags(write=False)
    out = GammaPaths(spec, ens, logG)
    cache[key] = (spec, out)
    return out


def gamma_path(spec: LinearBSDESpec, ens: MCEnsemble, t: float, s: float, paths=None) -> np.ndarray:
    """Γ(t, s) along the simulated paths (grid points t ≤ s)."""
    if s < t:
        raise ValueError("need t <= s")
    G = gamma_paths(spec, ens)(t, s)
    return G if paths is None else G[paths]


def check_ensemble(spec: LinearBSDESpec, ens: MCEnsemble) -> None:
    """The ensemble must share the grid, and carry the spec's jump measure (if any)."""
    if ens.grid != spec.grid:
        raise ValueError("spec and ensemble use different grids")
    if spec.levy and ens.levy != spec.levy:
        raise ValueError("ensemble jump measure differs from the spec's")


# ---------------------------------------------------------------------------
# closed formula
# ---------------------------------------------------------------------------

def _tails(spec: LinearBSDESpec, t: np.ndarray):
    """Deterministic pieces of the closed formula evaluated at times ``t``."""
    T = spec.grid.T
    La = spec.L_alpha
    gT = np.exp(La(T) - La(t))
    shift_B = spec.L_beta(T) - spec.L_beta(t)
    shift_J = spec.L_eta(T) - spec.L_eta(t)
    e = np.exp(-La(t))
    I0 = spec.weighted_antiderivative(spec.f_g0)
    drift = e * (I0(T) - I0(t))
    out = {"gT": gT, "shift_B": shift_B, "shift_J": shift_J, "drift": drift,
           "zB": np.zeros_like(t), "zJ": np.zeros_like(t), "cB_aff": np.zeros_like(t), "cJ_aff": np.zeros_like(t)}
    if not spec.f_gB.is_zero:
        IB = spec.weighted_antiderivative(spec.f_gB)
        IBb = spec.weighted_antiderivative(lambda r: spec.f_gB(r) * spec.L_beta(r))
        out["zB"] = e * (IB(T) - IB(t))
        # E[∫Γ gB B ds | F_t] = zB·(B(t) − L_β(t)) + e·∫ e^{L_α} gB L_β
        out["cB_aff"] = e * (IBb(T) - IBb(t)) - out["zB"] * spec.L_beta(t)
    if not spec.f_gJ.is_zero:
        IJ = spec.weighted_antiderivative(spec.f_gJ)
        IJe = spec.weighted_antiderivative(lambda r: spec.f_gJ(r) * spec.L_eta(r))
        out["zJ"] = e * (IJ(T) - IJ(t))
        out["cJ_aff"] = e * (IJe(T) - IJe(t)) - out["zJ"] * spec.L_eta(t)
    return out


def closed_form_Y(spec: LinearBSDESpec, t, B_t, J_t):
    """E[ξΓ(t,T) + ∫ₜᵀ Γ(t,s)γ(s) ds | F_t] as an affine function of (B(t), J(t)).

    Girsanov under Γ shifts B by ∫β₁ and the compensated jump integral by
    ∫Σζη₁ν, so with deterministic coefficients everything is explicit.
    """
    t = np.asarray(t, dtype=float)
    d = _tails(spec, t)
    xi = spec.xi
    Y = d["gT"] * (xi.c0 + xi.cB * (B_t + d["shift_B"]) + xi.cN * (J_t + d["shift_J"])) + d["drift"]
    Y = Y + d["zB"] * B_t + d["cB_aff"] + d["zJ"] * J_t + d["cJ_aff"]
    return Y


@dataclass(frozen=True, eq=False)
class LinearBSDESolution:
    spec: LinearBSDESpec
    Y: np.ndarray | None          # per path, (n_paths, M+1); None without an ensemble
    Ybar: np.ndarray              # E[Y(t)], closed form
    Z: np.ndarray                 # (M+1,), deterministic
    K: np.ndarray                 # (M+1, n_atoms), deterministic
    seed: int | None = None
    n_paths: int = 0
    info: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.spec.grid

    def terminal_error(self, ens: MCEnsemble) -> float:
        return float(np.max(np.abs(self.Y[:, -1] - self.spec.xi.value(ens))))

    def mean_path(self) -> np.ndarray:
        return self.Y.mean(axis=0)

    def table(self) -> list[dict]:
        rows = []
        for i, t in enumerate(self.grid.points):
            row = {"t": t, "Ybar": self.Ybar[i], "Z": self.Z[i]}
            for j in range(self.K.shape[1]):
                row[f"K_atom{j}"] = self.K[i, j]
            if self.Y is not None:
                row["Y_mc_mean"] = float(self.Y[:, i].mean())
            rows.append(row)
        return rows

    def summary(self) -> dict:
        return jsonable({"seed": self.seed, "n_paths": self.n_paths, "grid": self.grid.to_dict(),
                         "Y0": self.Ybar[0], "info": self.info})


def linear_bsde_solve(spec: LinearBSDESpec, ens: MCEnsemble | None = None) -> LinearBSDESolution:
    """Closed-form Y, Z, K for a linear BSDE without mean-field terms.

    Y(t) = g(t,T)[c₀ + c_B(B(t) + ∫ₜᵀβ₁) + c_N(J(t) + ∫ₜᵀΣζη₁ν)] + ∫ₜᵀ g(t,s)γ(s)ds
    (plus the affine-γ terms), g(t,s) = exp∫ₜˢα₁.  Z(t) = lim_{r↑t} D_rY(t) and
    K(t,ζ) = D_{t,ζ}Y(t) are deterministic: Z = c_B g(t,T) + ∫ₜᵀ g γ_B,
    K = ζ[c_N g(t,T) + ∫ₜᵀ g γ_J].
    """
    if spec.has_meanfield:
        raise UnsupportedError("mean-field coefficients present; use meanfield_bsde_solve")
    t = spec.grid.points
    d = _tails(spec, t)
    xi = spec.xi
    Z = xi.cB * d["gT"] + d["zB"]
    zetas = spec.levy.zetas
    K = (xi.cN * d["gT"] + d["zJ"])[:, None] * zetas[None, :] if spec.levy else np.zeros((len(t), 0))
    Ybar = closed_form_Y(spec, t, 0.0, 0.0)
    Y = None
    info = {"gamma_adapted": not spec.gamma.is_deterministic}
    if ens is not None:
        B = ens.brownian
        check_ensemble(spec, ens)
        J = _jump_state(ens) if spec.levy else np.zeros_like(B)
        Y = closed_form_Y(spec, t[None, :], B, J)
        Y[:, -1] = xi.value(ens)  # identical up to rounding; pin the terminal condition exactly
    return LinearBSDESolution(spec, Y, Ybar, Z, K, None if ens is None else ens.seed,
                              0 if ens is None else ens.n_paths, info)


def _raw_target(spec: LinearBSDESpec, ens: MCEnsemble, i: int) -> np.ndarray:
    """ξΓ(t_i,T) + ∫_{t_i}^T Γ(t_i,s)γ(s)ds along each path (trapezoid in s)."""
    G = gamma_paths(spec, ens)
    grid = ens.grid
    gam_rel = G.log[:, i:] - G.log[:, i:i + 1]
    Gam = np.exp(gam_rel)
    s = grid.points[i:]
    gam = spec.f_g0(s)[None, :] + spec.f_gB(s)[None, :] * ens.brownian[:, i:]
    if spec.levy and not spec.f_gJ.is_zero:
        gam = gam + spec.f_gJ(s)[None, :] * _jump_state(ens)[:, i:]
    integrand = Gam * gam
    if integrand.shape[1] > 1:
        integral = grid.dt * (integrand[:, 1:-1].sum(axis=1) + 0.5 * (integrand[:, 0] + integrand[:, -1]))
    else:
        integral = np.zeros(ens.n_paths)
    return spec.xi.value(ens) * Gam[:, -1] + integral


def regression_crosscheck(spec: LinearBSDESpec, ens: MCEnsemble, t: float, basis_degree: int = 2) -> dict:
    """Compare the closed-form Y(t) with a regression of the raw simulated target on F_t."""
    sol = linear_bsde_solve(spec, ens)
    i = ens.grid.index(t)
    raw = _raw_target(spec, ens, i)
    fit = regress_conditional(raw, t, ens, basis_degree=basis_degree).fitted
    diff = mc_mean(raw - sol.Y[:, i], ens.seed)
    return {"t": t, "mean_closed": float(sol.Y[:, i].mean()), "mean_raw": float(raw.mean()),
            "mean_diff": diff.estimate, "stderr": diff.stderr,
            "rms_fit_vs_closed": float(np.sqrt(np.mean((fit - sol.Y[:, i]) ** 2))),
            "passed": diff.within(0.0, 3.0, slack=2 * ens.grid.dt ** 2)}


# ---------------------------------------------------------------------------
# representation check
# ---------------------------------------------------------------------------

@dataclass
class RepresentationReport:
    t: float
    eps: list
    q_target: float
    q_estimates: list
    q_stderr: list
    r_target: list
    r_estimates: list
    r_stderr: list
    passed: bool

    @property
    def q_errors(self) -> list:
        return [abs(e - self.q_target) for e in self.q_estimates]

    def to_dict(self) -> dict:
        return jsonable({**self.__dict__, "q_errors": self.q_errors})


def representation_check(spec: LinearBSDESpec, ens: MCEnsemble, t: float, eps_steps=(4, 2, 1),
                         basis_degree: int = 2) -> RepresentationReport:
    """E[D_t p(t+ε) | F_t] → q(t) = Z(t) and E[D_{t,ζ} p(t+ε) | F_t] → r(t,ζ) = K(t,ζ).

    p = Y is the solved BSDE.  For r = t < t + ε the derivative of
    Y(t+ε) = E[ξΓ(t+ε,T) + ∫Γγ | F_{t+ε}] is taken inside: D_tΓ(t+ε, ·) = 0,
    so D_tp(t+ε) is the conditional mean of the pathwise quantity
    c_B Γ(t+ε,T) + ∫ Γ(t+ε,s) γ_B(s) ds, which is regressed on the state at t.
    ε runs over ``eps_steps`` grid steps (a dyadic refinement sequence).
    """
    grid = ens.grid
    i = grid.index(t)
    sol = linear_bsde_solve(spec, None)
    G = gamma_paths(spec, ens)
    eps, q_est, q_se, r_est, r_se = [], [], [], [], []
    zetas = spec.levy.zetas
    for k in eps_steps:
        j = i + int(k)
        if j > grid.M:
            raise ValueError("t + ε beyond the horizon")
        Gam = np.exp(G.log[:, j:] - G.log[:, j:j + 1])
        s = grid.points[j:]

        def with_drift(c, gfun):
            vals = c * Gam[:, -1]
            if not gfun.is_zero and Gam.shape[1] > 1:
                integ = Gam * gfun(s)[None, :]
                vals = vals + grid.dt * (integ[:, 1:-1].sum(axis=1) + 0.5 * (integ[:, 0] + integ[:, -1]))
            return vals

        dq = with_drift(spec.xi.cB, spec.f_gB)
        fit = regress_conditional(dq, t, ens, basis_degree=basis_degree).fitted
        eps.append(k * grid.dt)
        q_est.append(float(fit.mean()))
        q_se.append(float(np.std(dq, ddof=1) / np.sqrt(ens.n_paths)) if ens.n_paths > 1 else 0.0)
        if spec.levy:
            dr = with_drift(spec.xi.cN, spec.f_gJ)
            fr = regress_conditional(dr, t, ens, basis_degree=basis_degree).fitted
            se = float(np.std(dr, ddof=1) / np.sqrt(ens.n_paths))
            r_est.append([float(fr.mean()) * z for z in zetas])
            r_se.append([se * abs(z) for z in zetas])
    q = float(sol.Z[i])
    r = [float(v) for v in sol.K[i]] if spec.levy else []
    errs = [abs(e - q) for e in q_est]
    passed = errs[-1] <= 3 * q_se[-1] + 1e-12 and errs[-1] <= errs[0] + 1e-12
    if spec.levy:
        passed = passed and all(abs(a - b) <= 3 * c + 1e-12 for a, b, c in zip(r_est[-1], r, r_se[-1]))
    return RepresentationReport(t, eps, q, q_est, q_se, r, r_est, r_se, bool(passed))
