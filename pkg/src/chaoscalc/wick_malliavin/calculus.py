"""Hida-Malliavin derivative, Skorohod integral, conditioning and Clark-Ocone."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..chaos_core.chaos import ChaosProcess, HermiteChaos
from ..chaos_core.grid import TimeGrid
from ..chaos_core.hermite import HermiteBasis
from ..chaos_core.kernels import KernelChaos, hermite_to_kernel, kernel_to_hermite
from ..chaos_core.multiindex import MultiIndex, Truncation
from ..errors import TruncationError

__all__ = [
    "malliavin_derivative",
    "malliavin_derivative_process",
    "malliavin_kernel",
    "skorohod_integral",
    "conditional_expectation",
    "AdaptedIntegrand",
    "clark_ocone",
]


def malliavin_derivative(F: HermiteChaos, t: float, basis: HermiteBasis) -> HermiteChaos:
    """D_t F = Σ_{α,k} c_α α_k e_k(t) H_{α−ε^(k)}."""
    ek = basis.e(t)
    coef: dict[MultiIndex, float] = defaultdict(float)
    for a, c in F.items():
        for k, ak in a.support():
            if k > basis.K:
                raise ValueError(f"index uses variable {k} beyond basis K={basis.K}")
            coef[a.sub_unit(k)] += c * ak * ek[k - 1]
    return HermiteChaos(Truncation(F.K, max(F.N - 1, 0)), dict(coef))


def malliavin_derivative_process(F: HermiteChaos, basis: HermiteBasis) -> ChaosProcess:
    """t ↦ D_t F sampled on the basis grid."""
    coef: dict[MultiIndex, np.ndarray] = {}
    for a, c in F.items():
        for k, ak in a.support():
            b = a.sub_unit(k)
            coef[b] = coef.get(b, 0.0) + c * ak * basis.values[k - 1]
    return ChaosProcess(Truncation(F.K, max(F.N - 1, 0)), basis.grid, coef)


def malliavin_kernel(F: KernelChaos, t: float) -> KernelChaos:
    """D_t Σ I_n(f_n) = Σ n I_{n−1}(f_n(·, t)).

    For a rank-one term w·sym(g_1 ⊗ ... ⊗ g_n), n f_n(·,t) is
    w Σ_i g_i(t) sym(⊗_{j≠i} g_j).  Factors are read at t⁺ (t⁻ at the horizon).
    """
    vals = F.factor_values_at(t)
    f0 = 0.0
    terms: dict[int, tuple[list, list]] = {}
    for n, (w, ids) in F.terms.items():
        for i in range(n):
            wi = w * vals[ids[:, i]]
            if n == 1:
                f0 += float(wi.sum())
                continue
            rest = np.delete(ids, i, axis=1)
            terms.setdefault(n - 1, ([], []))
            terms[n - 1][0].append(wi)
            terms[n - 1][1].append(rest)
    out = {m: (np.concatenate(ws), np.vstack(iss)) for m, (ws, iss) in terms.items()}
    return KernelChaos(F.grid, F.mesh, f0, F.factors, out, max(F.max_order - 1, 1))


def skorohod_integral(Y: ChaosProcess, basis: HermiteBasis, cap: int | None = None,
                      strict: bool = True) -> HermiteChaos:
    """δ(Y) = ∫ Y(t) ⋄ Ḃ(t) dt = Σ_{α,k} (∫ a_α e_k) H_{α+ε^(k)}.

    Time integrals of the coefficient functions use the grid's composite
    Newton-Cotes weights; the index shift happens after integration.
    """
    if Y.grid.M != basis.grid.M or Y.grid.T != basis.grid.T:
        raise ValueError("process and basis live on different grids")
    N_out = Y.truncation.N + 1
    if cap is not None and N_out > cap:
        if strict and any(a.order + 1 > cap for a in Y.coefficients):
            raise TruncationError(f"skorohod_integral output order {N_out} exceeds cap {cap}")
        N_out = cap
    w = basis.grid.quad_weights
    K = Y.truncation.K
    E = basis.values[:K]
    coef: dict[MultiIndex, float] = defaultdict(float)
    for a, v in Y.items():
        if a.order + 1 > N_out:
            continue
        proj = E @ (v * w)
        for k in range(K):
            if proj[k] != 0.0:
                coef[a.add_unit(k + 1)] += proj[k]
    return HermiteChaos(Truncation(K, N_out), dict(coef))


def conditional_expectation(F, t: float, basis: HermiteBasis | None = None,
                            max_order: int | None = None) -> KernelChaos:
    """E[F | F_t] = Σ I_n(f_n · χ_[0,t]ⁿ).

    Hermite-basis inputs are first converted with :func:`hermite_to_kernel`
    (requires ``basis``).
    """
    if isinstance(F, HermiteChaos):
        if basis is None:
            raise ValueError("a HermiteBasis is required to condition a HermiteChaos")
        F = hermite_to_kernel(F, basis, max_order=max_order or max(F.max_order(), 1))
    return F.restrict(0.0, t)


@dataclass(frozen=True)
class AdaptedIntegrand:
    """Integrand u(t_i) given as one kernel element per grid time."""

    grid: TimeGrid
    kernels: tuple
    tag: str = ""

    def at(self, i: int) -> KernelChaos:
        return self.kernels[i]

    def support_violation(self) -> float:
        return max(k.support_violation(float(t)) for k, t in zip(self.kernels, self.grid.points))

    def to_process(self, basis: HermiteBasis, truncation: Truncation | None = None) -> ChaosProcess:
        """Hermite coefficients a_α(t_i) of the integrand on the grid."""
        samples = [kernel_to_hermite(k, basis, truncation) for k in self.kernels]
        tr = truncation or Truncation(basis.K, max(s.N for s in samples))
        coef: dict[MultiIndex, np.ndarray] = {}
        for i, s in enumerate(samples):
            for a, c in s.items():
                if a not in coef:
                    coef[a] = np.zeros(len(self.grid))
                coef[a][i] = c
        return ChaosProcess(tr, self.grid, coef)

    @classmethod
    def from_function(cls, grid: TimeGrid, fn, tag: str = "") -> "AdaptedIntegrand":
        return cls(grid, tuple(fn(float(t)) for t in grid.points), tag)


def clark_ocone(F: KernelChaos) -> AdaptedIntegrand:
    """φ(t) = E[D_t F | F_t] on the grid, so F = E[F] + ∫ φ dB."""
    grid = F.grid
    ks = tuple(malliavin_kernel(F, float(t)).restrict(0.0, float(t)) for t in grid.points)
    return AdaptedIntegrand(grid, ks, "clark-ocone")
