"""Checkable forms of the calculus identities (duality, integration by parts, ...)."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from ..chaos_core.chaos import ChaosProcess, HermiteChaos, dual_action, hida_norm
from ..chaos_core.hermite import HermiteBasis
from ..chaos_core.kernels import KernelChaos, kernel_to_hermite
from ..chaos_core.multiindex import MultiIndex, Truncation
from ..errors import TruncationError
from ..pathwise_mc.ensemble import MCEnsemble, mc_mean
from ..pathwise_mc.evaluation import evaluate, evaluate_kernel, evaluate_process
from ..reports import CheckReport
from .algebra import kernel_product, ordinary_product
from .calculus import (AdaptedIntegrand, clark_ocone, malliavin_derivative, malliavin_kernel,
                       skorohod_integral)

__all__ = [
    "basis_view",
    "derivative_process",
    "fundamental_theorem_check",
    "duality_check",
    "integration_by_parts_check",
    "chain_rule_check",
    "clark_ocone_residual",
    "polynomial_of_kernels",
    "product_process",
]


def basis_view(Y: ChaosProcess, t: float, basis: HermiteBasis) -> HermiteChaos:
    """Σ_α [Σ_k (a_α, e_k) e_k(t)] H_α — the process at t as seen through e_1..e_K.

    The inner products use the same grid quadrature as the Skorohod integral.
    """
    w = basis.grid.quad_weights
    ek = basis.e(t)
    K = Y.truncation.K
    return HermiteChaos(Y.truncation, {a: float((basis.values[:K] @ (v * w)) @ ek[:K]) for a, v in Y.items()})


def derivative_process(Y: ChaosProcess, t: float, basis: HermiteBasis) -> ChaosProcess:
    """s ↦ D_t Y(s) on the grid."""
    ek = basis.e(t)
    coef: dict[MultiIndex, np.ndarray] = {}
    for a, v in Y.items():
        for k, ak in a.support():
            b = a.sub_unit(k)
            coef[b] = coef.get(b, 0.0) + ak * ek[k - 1] * v
    return ChaosProcess(Truncation(Y.truncation.K, max(Y.truncation.N - 1, 0)), Y.grid, coef)


def fundamental_theorem_check(phi: ChaosProcess, t: float, basis: HermiteBasis,
                              tol: float = 1e-6) -> CheckReport:
    """D_t ∫ φ δB  versus  ∫ D_t φ δB + φ(t), coefficientwise.

    At finite K the point value φ(t) enters through the basis,
    Σ_k (φ, e_k) e_k(t); with that reading the identity is exact up to
    rounding.  The distance of the basis view from the raw φ(t) (pure
    K-truncation) is reported as ``truncation_gap``.
    """
    lhs = malliavin_derivative(skorohod_integral(phi, basis), t, basis)
    rhs = skorohod_integral(derivative_process(phi, t, basis), basis) + basis_view(phi, t, basis)
    dev = lhs.max_abs_diff(rhs)
    raw = phi.at_time(t)
    gap = basis_view(phi, t, basis).max_abs_diff(raw)
    return CheckReport("fundamental_theorem", dev, 0.0, tol, dev <= tol,
                       {"t": t, "truncation_gap": gap, "K": basis.K, "M": basis.grid.M})


def duality_check(F: KernelChaos, u: AdaptedIntegrand, ens: MCEnsemble) -> CheckReport:
    """E[F ∫ u dB]  versus  E[∫ u(t) E[D_t F | F_t] dt], on shared samples.

    Kernels are evaluated pathwise from the exact Brownian increments; ∫ u dB
    is the forward (Itô) sum and the dt-integral uses the grid quadrature.
    The CI half-width is the standard error of the paired difference.
    """
    grid = ens.grid
    phi = clark_ocone(F)
    Fv = evaluate_kernel(F, ens)
    dB = ens.increments
    ito = np.zeros(ens.n_paths)
    rhs = np.zeros(ens.n_paths)
    w = grid.quad_weights
    for i in range(grid.M + 1):
        ui = evaluate_kernel(u.at(i), ens)
        if i < grid.M:
            ito += ui * dB[:, i]
        rhs += w[i] * ui * evaluate_kernel(phi.at(i), ens)
    lhs = Fv * ito
    L, R = mc_mean(lhs, ens.seed), mc_mean(rhs, ens.seed)
    D = mc_mean(lhs - rhs, ens.seed)
    return CheckReport("duality", L.estimate, R.estimate, 3 * D.stderr,
                       abs(D.estimate) <= 3 * D.stderr + 1e-12,
                       {"ci_half_width": D.stderr, "lhs_stderr": L.stderr, "rhs_stderr": R.stderr,
                        "n": ens.n_paths, "seed": ens.seed})


def product_process(F: HermiteChaos, u: ChaosProcess) -> ChaosProcess:
    """t ↦ F·u(t), re-expanded in H_α (bilinear: one product per index of u)."""
    coef: dict[MultiIndex, np.ndarray] = {}
    N = 0
    for b, v in u.items():
        P = ordinary_product(F, HermiteChaos(u.truncation, {b: 1.0}))
        N = max(N, P.N)
        for a, c in P.items():
            coef[a] = coef.get(a, 0.0) + c * v
    return ChaosProcess(Truncation(max(F.K, u.truncation.K), N), u.grid, coef)


def integration_by_parts_check(F: HermiteChaos, u: ChaosProcess, ens: MCEnsemble,
                               basis: HermiteBasis) -> CheckReport:
    """δ(F u) = F δ(u) − ∫ u(t) D_t F dt, evaluated pathwise.

    The left side is computed on chaos coefficients (ordinary product F·u(t)
    re-expanded in H_α, then Skorohod-integrated); the right side multiplies
    pathwise values.  Within the K Gaussian coordinates the identity is an
    algebraic one, so the pathwise deviation is at rounding level; the sample
    means are compared within 3 standard errors as well.
    """
    grid = basis.grid
    Fu = product_process(F, u)
    lhs = evaluate(skorohod_integral(Fu, basis), ens)
    rhs = evaluate(F, ens) * evaluate(skorohod_integral(u, basis), ens)
    DF = ChaosProcess.from_function(grid, lambda t: malliavin_derivative(F, t, basis))
    rhs -= (evaluate_process(u, ens) * evaluate_process(DF, ens)) @ grid.quad_weights
    L, R = mc_mean(lhs, ens.seed), mc_mean(rhs, ens.seed)
    path_dev = float(np.max(np.abs(lhs - rhs)))
    scale = max(1.0, float(np.max(np.abs(lhs))))
    passed = path_dev <= 1e-8 * scale and abs(L.estimate - R.estimate) <= 3 * max(L.stderr, R.stderr) + 1e-12
    return CheckReport("integration_by_parts", L.estimate, R.estimate, 3 * max(L.stderr, R.stderr), passed,
                       {"max_pathwise_deviation": path_dev, "lhs_stderr": L.stderr, "rhs_stderr": R.stderr,
                        "n": ens.n_paths})


def _poly_derivative(poly: Mapping[tuple, float], i: int) -> dict:
    out: dict[tuple, float] = {}
    for e, c in poly.items():
        if e[i] > 0:
            e2 = list(e)
            e2[i] -= 1
            out[tuple(e2)] = out.get(tuple(e2), 0.0) + c * e[i]
    return out


def polynomial_of_kernels(poly: Mapping[tuple, float], Fs: Sequence[KernelChaos]) -> KernelChaos:
    """Σ c_e Π F_i^{e_i} using the exact kernel product."""
    base = Fs[0]
    total = KernelChaos(base.grid, base.mesh, 0.0, max_order=1)
    for e, c in poly.items():
        if len(e) != len(Fs):
            raise ValueError("polynomial arity does not match the number of inputs")
        term = KernelChaos(base.grid, base.mesh, 1.0, max_order=1)
        for F, p in zip(Fs, e):
            for _ in range(p):
                term = kernel_product(term, F)
        total = total + c * term
    return total


def chain_rule_check(Fs: Sequence[KernelChaos], poly: Mapping[tuple, float], t: float,
                     ens: MCEnsemble, tol: float = 1e-8, max_total_order: int = 6) -> CheckReport:
    """D_t φ(F) versus Σ_i ∂_i φ(F) D_t F_i for polynomial φ, pathwise.

    ``poly`` maps exponent tuples to coefficients, e.g. {(2,): 1.0} for x²
    and {(1, 1): 1.0} for x·y.  Products are formed exactly in kernel form.
    """
    deg = max(sum(e) for e in poly)
    order = max(max(F.terms, default=0) for F in Fs)
    if deg * order > max_total_order:
        raise TruncationError(f"φ of degree {deg} on order-{order} inputs exceeds order {max_total_order}")
    phiF = polynomial_of_kernels(poly, Fs)
    lhs = malliavin_kernel(phiF, t)
    rhs = None
    for i, F in enumerate(Fs):
        dpoly = _poly_derivative(poly, i)
        if not dpoly:
            continue
        term = kernel_product(polynomial_of_kernels(dpoly, Fs), malliavin_kernel(F, t))
        rhs = term if rhs is None else rhs + term
    lv = evaluate_kernel(lhs, ens)
    rv = evaluate_kernel(rhs, ens) if rhs is not None else np.zeros(ens.n_paths)
    dev = float(np.max(np.abs(lv - rv)))
    return CheckReport("chain_rule", float(np.mean(lv)), float(np.mean(rv)), tol, dev <= tol,
                       {"max_pathwise_deviation": dev, "t": t})


def clark_ocone_residual(F: KernelChaos, basis: HermiteBasis, ens: MCEnsemble | None = None,
                         tol: float = 1e-4) -> CheckReport:
    """E[(F − E[F] − ∫ φ dB)²] with φ = E[D_t F | F_t] from :func:`clark_ocone`.

    Both F and φ(t) are expanded in H_α (same K), the integral is the
    Skorohod/Itô integral on coefficients, and the residual's second moment is
    read off the coefficients (Σ α! r_α²) and, given an ensemble, estimated
    by Monte Carlo.
    """
    FH = kernel_to_hermite(F, basis)
    phi = clark_ocone(F).to_process(basis, Truncation(basis.K, max(FH.N - 1, 0)))
    R = FH - FH[MultiIndex()] - skorohod_integral(phi, basis)
    exact = hida_norm(R, 0.0) ** 2
    details = {"coefficient_second_moment": exact, "K": basis.K, "M": basis.grid.M}
    ok = exact <= tol
    if ens is not None:
        est = mc_mean(evaluate(R, ens) ** 2, ens.seed)
        details.update({"mc_second_moment": est.estimate, "mc_stderr": est.stderr, "n": ens.n_paths})
        ok = ok and est.estimate <= max(tol, 3 * est.stderr)
    return CheckReport("clark_ocone", exact, 0.0, tol, ok, details)
