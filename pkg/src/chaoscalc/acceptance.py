"""Acceptance suite: seventeen property/oracle checks spanning every module.

Each check returns a :class:`CriterionResult` with the measured quantities, the
tolerance it was held to and pass/fail.  Two scales are provided: ``full``
uses the reference sample sizes (10⁵ paths); ``quick`` shrinks Monte Carlo
sizes so the whole suite finishes in about a minute.

A test hook (``corrupt=True`` or the environment variable
``CHAOSCALC_SELFTEST_CORRUPT=1``) perturbs one chaos coefficient inside the
algebraic checks; a correct suite must then report failures.
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bsvie import BSVIESpec, FreeTerm, VolterraKernel, deterministic_residual, girsanov_build, resolvent_psi
from .chaos_core import (ChaosProcess, HermiteBasis, HermiteChaos, KernelChaos, MultiIndex, TimeGrid, Truncation,
                         brownian_chaos, expectation, gaussian_psd_check, kernel_to_hermite, wiener_integral_chaos)
from .control_mp import (ControlProblemLQ, SVIEControlSpec, cashflow_solve, degenerate_value, lq_solve,
                         stationarity_check, unconstrained_benchmark)
from .linear_bsde import (LinearBSDESpec, TerminalDescriptor, dense_solve, gamma_path, linear_bsde_solve,
                          meanfield_bsde_solve, representation_check)
from .pathwise_mc import LevyModel, brownian_path, build_ensemble, evaluate, mc_mean
from .reports import jsonable
from .wick_malliavin import (AdaptedIntegrand, clark_ocone, clark_ocone_residual, duality_check,
                             fundamental_theorem_check, integration_by_parts_check, ordinary_product,
                             skorohod_integral, wick_power, wick_product)

__all__ = ["CriterionResult", "Scale", "SCALES", "CRITERIA", "run_acceptance", "run_criterion", "format_line", "CORRUPT_ENV"]

CORRUPT_ENV = "CHAOSCALC_SELFTEST_CORRUPT"


@dataclass(frozen=True)
class Scale:
    level: str
    paths: int            # reference Monte Carlo size
    ibp_paths: int        # integration-by-parts check (K=12 basis)
    lq_paths: int


SCALES = {
    "full": Scale("full", 100_000, 20_000, 100_000),
    "quick": Scale("quick", 20_000, 5_000, 20_000),
}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    tolerance: str
    metrics: dict = field(default_factory=dict)
    runtime: float = 0.0
    note: str = ""
    known_deviation: bool = False   # fails only in a documented, analysed way (see ``note``)

    def to_dict(self) -> dict:
        return jsonable({"criterion": self.number, "name": self.name, "passed": self.passed,
                         "tolerance": self.tolerance, "metrics": self.metrics,
                         "runtime_s": round(self.runtime, 3), "note": self.note,
                         "known_deviation": self.known_deviation})


def format_line(r: CriterionResult) -> str:
    flag = "PASS" if r.passed else ("FAIL*" if r.known_deviation else "FAIL")
    return f"[{flag}] criterion {r.number:2d} {r.name}: {r.tolerance} ({r.runtime:.1f} s)"


@dataclass
class _Ctx:
    scale: Scale
    seed: int
    corrupt: bool

    def spoil(self, X: HermiteChaos) -> HermiteChaos:
        """The corruption hook: shift the first non-constant coefficient by 1e-3."""
        if not self.corrupt:
            return X
        items = dict(X.items())
        key = next((a for a in items if a.order > 0), MultiIndex())
        items[key] = items.get(key, 0.0) + 1e-3
        return HermiteChaos(X.truncation, items)


def _random_sparse(rng: np.random.Generator, K: int, N: int, n_terms: int = 6) -> HermiteChaos:
    coef = {}
    for _ in range(n_terms):
        order = int(rng.integers(0, N + 1))
        pos = rng.integers(1, K + 1, size=order)
        alpha = MultiIndex(np.bincount(pos, minlength=K + 1)[1:])
        coef[alpha] = coef.get(alpha, 0.0) + float(rng.normal())
    return HermiteChaos(Truncation(K, N), coef)


# ---------------------------------------------------------------------------
# the criteria
# ---------------------------------------------------------------------------

def _c1_wick_laws(ctx: _Ctx) -> CriterionResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(ctx.seed + 1)
    els = [_random_sparse(rng, 20, 4) for _ in range(100)]
    one = HermiteChaos.constant(1.0, Truncation(20, 0))
    wp = lambda a, b: ctx.spoil(wick_product(a, b, cap=None))
    dev = {"commutative": 0.0, "associative": 0.0, "distributive": 0.0, "unit": 0.0}
    for i in range(100):
        X, Y, Z = els[i], els[(i + 1) % 100], els[(i + 2) % 100]
        dev["commutative"] = max(dev["commutative"], wp(X, Y).max_abs_diff(wick_product(Y, X, cap=None)))
        dev["associative"] = max(dev["associative"],
                                 wp(wp(X, Y), Z).max_abs_diff(wick_product(X, wick_product(Y, Z, cap=None), cap=None)))
        dev["distributive"] = max(dev["distributive"], wp(X, Y + Z).max_abs_diff(
            wick_product(X, Y, cap=None) + wick_product(X, Z, cap=None)))
        dev["unit"] = max(dev["unit"], wp(one, X).max_abs_diff(X))
    rt = time.perf_counter() - t0
    worst = max(dev.values())
    return CriterionResult(1, "Wick algebra laws", worst <= 1e-12 and rt < 5.0,
                           "max deviation <= 1e-12 over 100 elements (K=20, N=4), runtime < 5 s",
                           {**dev, "max_deviation": worst, "elements": 100})


def _c2_wick_expectation(ctx: _Ctx) -> CriterionResult:
    rng = np.random.default_rng(ctx.seed + 2)
    coef_dev = 0.0
    for _ in range(100):
        X, Y = _random_sparse(rng, 20, 4), _random_sparse(rng, 20, 4)
        coef_dev = max(coef_dev, abs(expectation(ctx.spoil(wick_product(X, Y, cap=None)))
                                     - expectation(X) * expectation(Y)))
    g = TimeGrid(1.0, 64)
    ens = build_ensemble(ctx.seed + 2, ctx.scale.paths, 20, g)
    X = HermiteChaos(Truncation(20, 2), {MultiIndex(): 1.0, MultiIndex.unit(1): 0.7, MultiIndex.unit(3): -0.4,
                                         MultiIndex([0, 1, 0, 0, 1]): 0.3})
    Y = HermiteChaos(Truncation(20, 2), {MultiIndex(): -0.5, MultiIndex.unit(1): 0.5, MultiIndex([2]): 0.2,
                                         MultiIndex.unit(5): 0.6})
    est = mc_mean(evaluate(wick_product(X, Y), ens), ens.seed)
    target = expectation(X) * expectation(Y)
    ok_path = est.within(target)
    return CriterionResult(2, "E[X<>Y] = E[X]E[Y]", coef_dev <= 1e-12 and ok_path,
                           "coefficient deviation <= 1e-12; pathwise mean within 3 sigma",
                           {"coefficient_deviation": coef_dev, "mc": est.to_dict(), "target": target,
                            "z": abs(est.estimate - target) / est.stderr})


def _c3_wick_square(ctx: _Ctx) -> CriterionResult:
    g = TimeGrid(1.0, 64)
    b = HermiteBasis(30, g)
    ens = build_ensemble(ctx.seed + 3, ctx.scale.paths, 30, g, basis=b)
    rows = []
    ok = True
    for t in (0.25, 0.5, 1.0):
        W = ctx.spoil(wick_power(brownian_chaos(t, b), 2))
        oracle = kernel_to_hermite(KernelChaos.indicator_power(b, 2, 0.0, t), b)
        cdev = W.max_abs_diff(oracle)
        Bt = brownian_path(ens, t)
        d = mc_mean(evaluate(W, ens) - (Bt ** 2 - t), ens.seed)
        ok = ok and cdev <= 1e-8 and d.within(0.0)
        rows.append({"t": t, "coefficient_deviation": cdev, "mean_difference": d.estimate, "stderr": d.stderr})
    return CriterionResult(3, "Wick square of Brownian motion", ok,
                           "coefficient match <= 1e-8 (K=30); pathwise mean difference within 3 sigma",
                           {"rows": rows})


def _c4_skorohod_cube(ctx: _Ctx) -> CriterionResult:
    t0 = time.perf_counter()
    g = TimeGrid(1.0, 64)
    b = HermiteBasis(30, g)
    BT = brownian_chaos(1.0, b)
    Y = ChaosProcess.from_function(g, lambda t: wick_product(brownian_chaos(t, b), BT - brownian_chaos(t, b)))
    S = ctx.spoil(skorohod_integral(Y, b))
    dev = S.max_abs_diff(wick_power(BT, 3) * (1.0 / 6.0))
    rt = time.perf_counter() - t0
    return CriterionResult(4, "Skorohod integral of B(t)[B(T)-B(t)]", dev <= 1e-8 and rt < 30.0,
                           "coefficientwise <= 1e-8 vs (1/6) B(T)^<>3 (K=30, M=64), runtime < 30 s",
                           {"max_deviation": dev})


def _c5_hermite_wick(ctx: _Ctx) -> CriterionResult:
    g = TimeGrid(1.0, 64)
    b = HermiteBasis(30, g)
    f = np.zeros(30)
    f[0] = f[1] = 1.0
    w = wiener_integral_chaos(f, b, coefficients=True)
    nf = float(np.sqrt(2.0))
    X = w * (1.0 / nf)
    hs = [HermiteChaos.constant(1.0, Truncation(30, 0)), X]
    devs = []
    for n in range(1, 6):
        if n >= 2:
            hs.append(ordinary_product(X, hs[n - 1]) - hs[n - 2] * (n - 1))
        devs.append(ctx.spoil(hs[n] * nf ** n).max_abs_diff(wick_power(w, n)))
    return CriterionResult(5, "Hermite polynomial / Wick power theorem", max(devs) <= 1e-10,
                           "h_n(w/|f|)|f|^n = w^<>n coefficientwise <= 1e-10, n <= 5",
                           {"deviation_by_n": devs})


def _c6_fundamental(ctx: _Ctx) -> CriterionResult:
    rows = []
    ok = True
    devs = {}
    for M in (64, 128):
        g = TimeGrid(1.0, M)
        b = HermiteBasis(30, g)
        phis = {
            "deterministic": ChaosProcess.deterministic(g, np.cos(g.points), Truncation(30, 0)),
            "B(s)": ChaosProcess.from_function(g, lambda s: brownian_chaos(s, b)),
            "B(s)^2": ChaosProcess.from_function(g, lambda s: ordinary_product(brownian_chaos(s, b),
                                                                               brownian_chaos(s, b))),
        }
        for name, phi in phis.items():
            d = max(fundamental_theorem_check(phi, t, b).lhs for t in (0.25, 0.5, 0.75))
            devs[(name, M)] = d
            rows.append({"phi": name, "M": M, "deviation": d})
            ok = ok and d <= 1e-6
    halving = {name: devs[(name, 128)] <= max(devs[(name, 64)] / 2, 1e-12) for name in ("deterministic", "B(s)",
                                                                                        "B(s)^2")}
    ok = ok and all(halving.values())
    return CriterionResult(6, "Fundamental theorem D_t of a Skorohod integral", ok,
                           "deviation <= 1e-6 at M=64; dev(2M) <= max(dev(M)/2, 1e-12)",
                           {"rows": rows, "halving": halving})


def _c7_clark_ocone(ctx: _Ctx) -> CriterionResult:
    g = TimeGrid(1.0, 64)
    b = HermiteBasis(30, g)
    ens = build_ensemble(ctx.seed + 7, ctx.scale.paths, 30, g, basis=b)
    fac = lambda s: np.cos(s) * ((s >= 0) & (s <= 1))
    Fs = {
        "B(T)": KernelChaos.indicator_power(b, 1),
        "B(T)^2": KernelChaos.indicator_power(b, 2) + 1.0,
        "exp<>(int f dB)": KernelChaos.from_terms(b, 1.0, [(1.0, [fac]), (0.5, [fac, fac]),
                                                         (1.0 / 6.0, [fac, fac, fac])]),
    }
    rows = []
    ok = True
    for name, F in Fs.items():
        r = clark_ocone_residual(F, b, ens)
        ok = ok and r.passed
        rows.append({"F": name, "coefficient_second_moment": r.lhs, "mc_second_moment": r.details["mc_second_moment"],
                     "mc_stderr": r.details["mc_stderr"], "passed": r.passed})
    # φ(t) = f(t)·E[F|F_t] for the (order-3 truncated) Wick exponential
    phi = clark_ocone(Fs["exp<>(int f dB)"])
    phi_dev = 0.0
    for t in (0.25, 0.5, 0.75):
        ft = lambda s, t=t: fac(s) * (s <= t)
        ref = KernelChaos.from_terms(b, np.cos(t), [(np.cos(t), [ft]), (0.5 * np.cos(t), [ft, ft])])
        phi_dev = max(phi_dev, (phi.at(g.index(t)) - ref).l2_norm())
    ok = ok and phi_dev <= 1e-8
    return CriterionResult(7, "Clark-Ocone representation", ok,
                           "E[(F - E F - int phi dB)^2] <= max(1e-4, 3 sigma); phi = f F for the Wick exponential",
                           {"rows": rows, "exp_integrand_deviation": phi_dev})


def _c8_duality_ibp(ctx: _Ctx) -> CriterionResult:
    g = TimeGrid(1.0, 64)
    b = HermiteBasis(30, g)
    ens = build_ensemble(ctx.seed + 8, ctx.scale.paths, 30, g, basis=b)
    BT = KernelChaos.indicator_power(b, 1)
    BT2 = KernelChaos.indicator_power(b, 2) + 1.0
    u1 = AdaptedIntegrand.from_function(g, lambda t: KernelChaos.constant(b, 1.0))
    uB = AdaptedIntegrand.from_function(g, lambda t: KernelChaos.indicator_power(b, 1, 0.0, t))
    rows = []
    for name, F, u in (("F=B(T), u=1", BT, u1), ("F=B(T)^2, u=B(t)", BT2, uB)):
        r = duality_check(F, u, ens)
        rows.append({"check": "duality " + name, "lhs": r.lhs, "rhs": r.rhs, "half_width": r.tolerance,
                     "passed": r.passed})
    b12 = HermiteBasis(12, g)
    ens12 = build_ensemble(ctx.seed + 80, ctx.scale.ibp_paths, 12, g, basis=b12)
    F = kernel_to_hermite(KernelChaos.indicator_power(b12, 2) + 1.0, b12)
    uP = ChaosProcess.from_function(g, lambda s: brownian_chaos(s, b12))
    r = integration_by_parts_check(F, uP, ens12, b12)
    rows.append({"check": "integration by parts F=B(T)^2, u=B(t) (K=12)", "lhs": r.lhs, "rhs": r.rhs,
                 "half_width": r.tolerance, "max_pathwise_deviation": r.details["max_pathwise_deviation"],
                 "passed": r.passed})
    return CriterionResult(8, "Duality and integration by parts", all(x["passed"] for x in rows),
                           "paired means within 3 sigma", {"rows": rows})


def _c9_moments(ctx: _Ctx) -> CriterionResult:
    g = TimeGrid(1.0, 64)
    b = HermiteBasis(100, g)
    ens = build_ensemble(ctx.seed + 9, ctx.scale.paths, 100, g, basis=b)
    rows = []
    ok = True
    for t in (0.25, 0.5, 1.0):
        Bt = evaluate(brownian_chaos(t, b), ens)
        tail = float(t - np.sum(b.E(t) ** 2))
        m1 = mc_mean(Bt, ens.seed)
        m2 = mc_mean(Bt ** 2, ens.seed)
        m4 = mc_mean(Bt ** 4, ens.seed)
        v = t - tail
        r = {"t": t, "mean": m1.estimate, "mean_stderr": m1.stderr, "var": m2.estimate, "var_stderr": m2.stderr,
             "fourth": m4.estimate, "fourth_stderr": m4.stderr, "K_tail": tail,
             "mean_ok": m1.within(0.0), "var_ok": m2.within(t, slack=abs(tail)),
             "fourth_ok": m4.within(3 * t * t),
             # the truncated variable is N(0, v): its 4th moment is 3v², short of 3t² by 3(t² − v²)
             "fourth_vs_3v2_ok": m4.within(3 * v * v), "fourth_tail_gap": 3 * (t * t - v * v)}
        ok = ok and r["mean_ok"] and r["var_ok"] and r["fourth_ok"]
        rows.append(r)
    note = ""
    known = not ok and all(r["mean_ok"] and r["var_ok"] and r["fourth_vs_3v2_ok"] for r in rows)
    if known:
        note = ("the K=100 chaos variable has variance v = t - K-tail; its 4th moment 3v^2 misses 3t^2 by "
                "3(t^2 - v^2), far above 3 sigma; the 4th-moment tolerance carries no K-tail allowance")
    return CriterionResult(9, "Brownian moment suite", ok,
                           "|mean| <= 3s, |var - t| <= 3s + K-tail, |4th - 3t^2| <= 3s (K=100)", {"rows": rows},
                           note=note, known_deviation=known)


def _c10_gamma(ctx: _Ctx) -> CriterionResult:
    g = TimeGrid(1.0, 64)
    levy = LevyModel.from_lists([0.5, -0.3], [1.0, 0.8])
    ens = build_ensemble(ctx.seed + 10, ctx.scale.paths, 8, g, levy=levy)
    spec = LinearBSDESpec(g, alpha1=lambda t: 0.2 + 0.1 * t, beta1=0.4, eta1=[0.3, -0.2], levy=levy,
                          xi=TerminalDescriptor(1.0, 0.5, 0.7))
    rows = []
    ok = True
    for t, s in ((0.0, 1.0), (0.25, 0.75), (0.5, 1.0)):
        est = mc_mean(gamma_path(spec, ens, t, s), ens.seed)
        target = float(spec.g(t, s))
        ok = ok and est.within(target)
        rows.append({"t": t, "s": s, "estimate": est.estimate, "stderr": est.stderr, "exp_int_alpha1": target})
    G01 = gamma_path(spec, ens, 0.0, 1.0)
    mult = float(np.max(np.abs(gamma_path(spec, ens, 0.0, 0.5) * gamma_path(spec, ens, 0.5, 1.0) - G01) / G01))
    ok = ok and mult <= 1e-12
    return CriterionResult(10, "Stochastic exponential mean and multiplicativity", ok,
                           "E[Gamma(t,s)] within 3 sigma of exp(int alpha1); multiplicativity <= 1e-12 relative",
                           {"rows": rows, "multiplicativity_deviation": mult})


def _c11_meanfield(ctx: _Ctx) -> CriterionResult:
    t0 = time.perf_counter()
    levy = LevyModel.from_lists([0.5, -0.3], [1.0, 0.8])
    g32 = TimeGrid(1.0, 32)
    mf = LinearBSDESpec(g32, alpha1=0.2, alpha2=0.8, beta1=0.4, beta2=0.5, eta1=[0.3, -0.2], eta2=[0.4, 0.2],
                        levy=levy, xi=TerminalDescriptor(1.0, 0.5, 0.7), gamma=np.sin)
    S = meanfield_bsde_solve(mf)
    neumann_dev = S.V.max_abs_diff(dense_solve(mf, S.F))
    one_interval = len(S.intervals) == 1
    g = TimeGrid(1.0, 64)
    ens = build_ensemble(ctx.seed + 11, min(ctx.scale.paths, 20_000), 8, g, levy=levy)
    plain = LinearBSDESpec(g, alpha1=lambda t: 0.2 + 0.1 * t, beta1=0.4, eta1=[0.3, -0.2], levy=levy,
                           xi=TerminalDescriptor(1.0, 0.5, 0.7), gamma=np.sin)
    red = float(np.max(np.abs(meanfield_bsde_solve(plain, ens).Y - linear_bsde_solve(plain, ens).Y)))
    long = LinearBSDESpec(TimeGrid(2.0, 64), alpha1=0.3, alpha2=2.5, beta1=0.4, beta2=1.5, eta1=[0.3, -0.2],
                          eta2=[0.4, 0.2], levy=levy, xi=TerminalDescriptor(1.0, 0.5, 0.7), gamma=np.cos)
    L = meanfield_bsde_solve(long)
    rt = time.perf_counter() - t0
    ok = one_interval and neumann_dev < 1e-6 and red <= 1e-8 and L.continuity_jump <= 1e-8 and rt < 60.0
    return CriterionResult(11, "Mean-field BSDE", ok,
                           "Neumann vs dense < 1e-6; reduction <= 1e-8; stitched continuity <= 1e-8; runtime < 60 s",
                           {"neumann_vs_dense": neumann_dev, "single_interval": one_interval,
                            "reduction_deviation": red, "stitched_intervals": len(L.intervals),
                            "continuity_jump": L.continuity_jump})


def _c12_representation(ctx: _Ctx) -> CriterionResult:
    g = TimeGrid(1.0, 64)
    levy = LevyModel.from_lists([0.5, -0.3], [1.0, 0.8])
    ens = build_ensemble(ctx.seed + 12, ctx.scale.paths, 8, g, levy=levy)
    triv = representation_check(LinearBSDESpec(g, xi=TerminalDescriptor(0.0, 1.0, 0.0)), ens, 0.5)
    triv_dev = float(np.max(np.abs(np.asarray(triv.q_estimates) - 1.0)))
    spec = LinearBSDESpec(g, alpha1=0.1, beta1=0.5, eta1=[0.3, -0.2], levy=levy, xi=TerminalDescriptor(1.0, 1.0, 0.7))
    r = representation_check(spec, ens, 0.5)
    ok = triv_dev <= 1e-12 and r.passed
    return CriterionResult(12, "BSDE representation of Z via D_t p(t+eps)", ok,
                           "trivial case equals 1 exactly; beta1 = const converges to q(t) within 3 sigma",
                           {"trivial_estimates": triv.q_estimates, "trivial_deviation": triv_dev,
                            "eps": r.eps, "q_target": r.q_target, "q_estimates": r.q_estimates,
                            "q_stderr": r.q_stderr})


def _c13_resolvent(ctx: _Ctx) -> CriterionResult:
    g = TimeGrid(1.0, 63)          # 64 grid points
    Pe = resolvent_psi(VolterraKernel.exp_decay(1.0), g)
    e1 = Pe.max_abs_diff(lambda t, r: np.ones(np.shape(r)))
    c = 1.3
    Pc = resolvent_psi(VolterraKernel.constant(c, 1.0), g, check_identity=False)
    e2 = Pc.max_abs_diff(lambda t, r: c * np.exp(c * (r - t)))
    printed = {"exp-decay": Pe.info["printed_bound_violations"], "constant": Pc.info["printed_bound_violations"]}
    valid = {"exp-decay": Pe.info["valid_bound_violations"], "constant": Pc.info["valid_bound_violations"]}
    never = not any(printed.values())
    ok = e1 <= 1e-8 and e2 <= 1e-6 and never
    note = ("" if never else
            "C^n T^n/n! is exceeded (e.g. Phi=1, T=1, n=2: Phi^(2)(0,1)=1 > 1/2); "
            "the bound C^n T^(n-1)/(n-1)! holds: violations " + str(valid))
    return CriterionResult(13, "Resolvent kernel", ok,
                           "exp kernel |Psi-1| <= 1e-8; constant |Psi - c e^{c(r-t)}| <= 1e-6; "
                           "factorial bound C^n T^n/n! never violated",
                           {"exp_decay_error": e1, "constant_error": e2, "identity_residual": Pe.info["identity_residual"],
                            "printed_bound_violations": printed, "valid_bound_violations": valid,
                            "parts": {"exp_decay": e1 <= 1e-8, "constant": e2 <= 1e-6, "factorial_bound": never}},
                           note=note,
                           known_deviation=(not never and e1 <= 1e-8 and e2 <= 1e-6 and not any(valid.values())))


def _c14_bsvie(ctx: _Ctx) -> CriterionResult:
    g = TimeGrid(1.0, 64)
    r1 = deterministic_residual(BSVIESpec(g, VolterraKernel.exp_decay(1.0), F=FreeTerm(a=1.0)))
    k2 = VolterraKernel(lambda t, r: 0.8 * np.cos(t) * np.exp(-(r - t) ** 2), 1.0, "gaussian-memory")
    r2 = deterministic_residual(BSVIESpec(g, k2, F=FreeTerm(a=lambda t: np.sin(3 * t) + 1.0)))
    levy = LevyModel(((0.5, 1.0), (-0.3, 2.0)))
    ens = build_ensemble(ctx.seed + 14, ctx.scale.paths, 8, g, levy)
    sp = BSVIESpec(g, VolterraKernel(lambda t, r: 0.7 * np.exp(-(r - t)) * (1 + t), 1.0, "memory"),
                   xi_drift=lambda s: 0.4 + 0.3 * s, beta=0.3,
                   F=FreeTerm(a=lambda t: 1 + t, b=lambda t: 0.5 + t, c=lambda t: 0.8 - 0.2 * t), levy=levy)
    G = girsanov_build(sp, ens)
    MT = mc_mean(G.MT, ens.seed)
    ok = r1.passed and r2.passed and MT.within(1.0)
    return CriterionResult(14, "BSVIE closed formula and Girsanov", ok,
                           "deterministic-F residual <= 1e-6; E[M(T)] = 1 within 3 sigma",
                           {"residual_exp_kernel": r1.lhs, "residual_gaussian_kernel": r2.lhs,
                            "E[M(T)]": MT.to_dict()})


def _c15_lq(ctx: _Ctx) -> CriterionResult:
    t0 = time.perf_counter()
    g = TimeGrid(1.0, 64)
    levy = LevyModel(((0.5, 1.0),))
    ens = build_ensemble(ctx.seed + 15, ctx.scale.lq_paths, 4, g, levy)
    pb = ControlProblemLQ(-2.0, 0.3, g, (0.2,), levy, True)
    it = lq_solve(pb, ens)
    bm = unconstrained_benchmark(ControlProblemLQ(-2.0, 0.3, g, (0.2,), levy, False), ens)
    diff = it.J.estimate - bm.J.estimate
    sigma = float(np.hypot(it.J.stderr, bm.J.stderr))
    st = stationarity_check(it)
    pb2 = ControlProblemLQ(0.5, 0.5, g, (0.3,), levy, True)
    it2 = lq_solve(pb2, ens)
    st2 = stationarity_check(it2)
    rt = time.perf_counter() - t0
    parts = {"value_match": abs(diff) <= 3 * sigma, "stationarity": st.passed,
             "constrained_nonnegative": bool(np.all(it2.u >= 0.0)), "constrained_stationarity": st2.passed,
             "constrained_boundary": bool(np.all(st2.boundary_ok)), "runtime": rt < 300.0}
    return CriterionResult(15, "LQ control by Picard iteration", all(parts.values()),
                           "|J(u_Picard) - J(u*)| <= 3 sigma; stationarity at every t; u >= 0 and p <= 3 sigma "
                           "where u = 0; runtime < 5 min",
                           {"J_picard": it.J.to_dict(), "J_benchmark": bm.J.to_dict(), "difference": diff,
                            "sigma": sigma, "iterations": it.iteration, "converged": it.converged,
                            "active_fraction": float(np.mean(it2.u[:, :-1] == 0.0)), "parts": parts})


def _c16_cashflow(ctx: _Ctx) -> CriterionResult:
    g = TimeGrid(1.0, 64)
    levy = LevyModel(((0.5, 1.0),))
    ens = build_ensemble(ctx.seed + 16, min(ctx.scale.paths, 20_000), 4, g, levy)
    c, x0 = 2.0, 1.5
    r = cashflow_solve(SVIEControlSpec(g, None, 0.0, 0.0, x0, TerminalDescriptor(c), levy), ens)
    target = degenerate_value(c, x0, g.T)
    ok = r.J.within(target, slack=1e-12 * max(1.0, abs(target))) and r.first_order_residual <= 1e-6
    return CriterionResult(16, "Cash-flow SVIE control (degenerate case)", ok,
                           "J = c x0 - T(1 + ln c) within 3 sigma; |1/u - p| <= 1e-6",
                           {"J": r.J.to_dict(), "target": target, "first_order_residual": r.first_order_residual})


def _c17_psd(ctx: _Ctx) -> CriterionResult:
    rng = np.random.default_rng(ctx.seed + 17)
    g = TimeGrid(1.0, 64)
    t = g.points
    mins = []
    for _ in range(50):
        n = int(rng.integers(5, 40))
        a = rng.normal(size=(n, 6)) * rng.uniform(0.1, 3.0)
        basis = np.stack([np.ones_like(t), t, np.sin(np.pi * t), np.cos(np.pi * t), np.sin(3 * t), t ** 2])
        phis = a @ basis
        mins.append(gaussian_psd_check(phis, g))
    worst = float(min(mins))
    return CriterionResult(17, "Gaussian characteristic-function kernel is PSD", worst >= -1e-10,
                           "min eigenvalue >= -1e-10 over 50 batches", {"min_eigenvalue": worst})


CRITERIA: dict[int, Callable[[_Ctx], CriterionResult]] = {
    1: _c1_wick_laws, 2: _c2_wick_expectation, 3: _c3_wick_square, 4: _c4_skorohod_cube, 5: _c5_hermite_wick,
    6: _c6_fundamental, 7: _c7_clark_ocone, 8: _c8_duality_ibp, 9: _c9_moments, 10: _c10_gamma,
    11: _c11_meanfield, 12: _c12_representation, 13: _c13_resolvent, 14: _c14_bsvie, 15: _c15_lq,
    16: _c16_cashflow, 17: _c17_psd,
}


def run_criterion(number: int, level: str = "full", seed: int = 20240, corrupt: bool | None = None,
                  paths: int | None = None) -> CriterionResult:
    """Run one criterion; ``paths`` overrides every Monte Carlo size of the level."""
    if corrupt is None:
        corrupt = os.environ.get(CORRUPT_ENV, "") not in ("", "0")
    scale = SCALES[level]
    if paths is not None:
        scale = Scale(level, paths, paths, paths)
    ctx = _Ctx(scale, seed, corrupt)
    t0 = time.perf_counter()
    res = CRITERIA[number](ctx)
    res.runtime = time.perf_counter() - t0
    res.passed = bool(res.passed)
    res.known_deviation = bool(res.known_deviation and not res.passed)
    return res


def run_acceptance(level: str = "full", criteria=None, seed: int = 20240, corrupt: bool | None = None,
                   progress: Callable[[CriterionResult], None] | None = None) -> list[CriterionResult]:
    """Run the selected criteria (all by default) and return their results in order."""
    if level not in SCALES:
        raise ValueError(f"unknown level {level!r}; expected one of {sorted(SCALES)}")
    out = []
    for n in (sorted(CRITERIA) if criteria is None else criteria):
        res = run_criterion(n, level, seed, corrupt)
        out.append(res)
        if progress is not None:
            progress(res)
    return out
