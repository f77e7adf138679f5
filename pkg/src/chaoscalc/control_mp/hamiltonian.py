"""Hamiltonians for jump-diffusion control problems.

For dX = b dt + σ dB + ∫γ Ñ(dt,dζ) and a running reward f,

    H(t, x, u, p, q, r) = f(t,x,u) + b(t,x,u)p + σ(t,x,u)q + Σ_j γ(t,x,u,ζ_j) r_j ν_j.
"""
from __future__ import annotations

from typing import Protocol

import numpy as np

__all__ = ["ControlCoefficients", "hamiltonian", "hamiltonian_du"]


class ControlCoefficients(Protocol):
    nus: np.ndarray

    def f(self, t, x, u): ...
    def b(self, t, x, u): ...
    def sigma(self, t, x, u): ...
    def gamma(self, t, x, u):  # values per atom, trailing axis
        ...


def hamiltonian(problem: ControlCoefficients, t, x, u, p, q, r=None):
    """f + bp + σq + Σ_j γ_j r_j ν_j (``r`` has one trailing entry per jump atom)."""
    out = problem.f(t, x, u) + problem.b(t, x, u) * p + problem.sigma(t, x, u) * q
    nus = np.asarray(problem.nus, dtype=float)
    if len(nus):
        if r is None:
            r = np.zeros(len(nus))
        g = np.asarray(problem.gamma(t, x, u), dtype=float)
        out = out + np.sum(g * np.asarray(r, dtype=float) * nus, axis=-1)
    return out


def hamiltonian_du(problem: ControlCoefficients, t, x, u, p, q, r=None, h: float = 1e-6):
    """∂H/∂u by a central difference (exact for Hamiltonians quadratic in u)."""
    return (hamiltonian(problem, t, x, u + h, p, q, r) - hamiltonian(problem, t, x, u - h, p, q, r)) / (2 * h)
