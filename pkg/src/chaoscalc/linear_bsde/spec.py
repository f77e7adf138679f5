"""Problem description for linear (mean-field) BSDEs with jumps.

The equation is

    dY = −[α₁Y + β₁Z + ∫η₁K dν + α₂E[Y] + β₂E[Z] + ∫η₂E[K] dν + γ] dt
         + Z dB + ∫K Ñ(dt, dζ),          Y(T) = ξ,

with deterministic coefficients, a drift γ that is deterministic or affine
in the state (B(t), J(t)), and an affine terminal value
ξ = c₀ + c_B B(T) + c_N J(T), where J(t) = ∫₀ᵗ∫ ζ Ñ(ds, dζ).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from ..chaos_core.grid import TimeGrid
from ..coefficients import JumpFunction, TimeFunction, jump_function, time_function
from ..config import check_keys, parse_coefficient, parse_grid, parse_levy, parse_number, require
from ..errors import ConfigError, DomainError, UnsupportedError
from ..pathwise_mc.ensemble import LevyModel, MCEnsemble
from ..pathwise_mc.evaluation import compensated_jump_process

__all__ = ["TerminalDescriptor", "GammaDrift", "LinearBSDESpec"]


@dataclass(frozen=True)
class TerminalDescriptor:
    """ξ = c₀ + c_B·B(T) + c_N·∫₀ᵀ∫ζ Ñ(ds,dζ); D_tξ = c_B and D_{t,ζ}ξ = c_N ζ."""

    c0: float = 0.0
    cB: float = 0.0
    cN: float = 0.0

    @classmethod
    def from_config(cls, d) -> "TerminalDescriptor":
        if not isinstance(d, Mapping):
            raise UnsupportedError("terminal value must be affine: give {c0, cB, cN}")
        extra = set(d) - {"c0", "cB", "cN"}
        if extra:
            raise UnsupportedError(f"terminal value must be affine in B(T) and J(T); unsupported terms {sorted(extra)}")
        return cls(*(parse_number(d.get(k, 0.0), f"xi.{k}") for k in ("c0", "cB", "cN")))

    def malliavin_brownian(self) -> float:
        return self.cB

    def malliavin_jump(self, zeta):
        return self.cN * np.asarray(zeta, dtype=float)

    def value(self, ens: MCEnsemble) -> np.ndarray:
        out = self.c0 + self.cB * ens.brownian[:, -1]
        if self.cN:
            if not ens.levy:
                raise ValueError("c_N ≠ 0 needs an ensemble with jumps")
            out = out + self.cN * _jump_state(ens)[:, -1]
        return out

    def to_dict(self) -> dict:
        return {"c0": self.c0, "cB": self.cB, "cN": self.cN}


@dataclass(frozen=True)
class GammaDrift:
    """γ(t) = g0(t) + gB(t)·B(t) + gJ(t)·J(t)  (deterministic when gB = gJ = 0)."""

    g0: object = 0.0
    gB: object = 0.0
    gJ: object = 0.0

    @property
    def is_deterministic(self) -> bool:
        return _is_zero(self.gB) and _is_zero(self.gJ)


def _is_zero(x) -> bool:
    return x is None or (np.isscalar(x) and float(x) == 0.0)


def _jump_state(ens: MCEnsemble) -> np.ndarray:
    cache = ens.__dict__.setdefault("_jstate", {})
    if "J" not in cache:
        cache["J"] = compensated_jump_process(ens, lambda s, z: z)
    return cache["J"]


@dataclass(frozen=True, eq=False)
class LinearBSDESpec:
    grid: TimeGrid
    alpha1: object = 0.0
    alpha2: object = 0.0
    beta1: object = 0.0
    beta2: object = 0.0
    eta1: object = 0.0
    eta2: object = 0.0
    gamma: object = 0.0
    xi: TerminalDescriptor = field(default_factory=TerminalDescriptor)
    levy: LevyModel = field(default_factory=LevyModel)

    def __post_init__(self):
        if not isinstance(self.gamma, GammaDrift):
            object.__setattr__(self, "gamma", GammaDrift(self.gamma))
        if isinstance(self.xi, Mapping):
            object.__setattr__(self, "xi", TerminalDescriptor.from_config(self.xi))
        if not isinstance(self.xi, TerminalDescriptor):
            raise UnsupportedError("terminal value must be a TerminalDescriptor (affine in B(T), J(T))")
        if self.levy:
            t = self.grid.points
            x, _ = np.polynomial.legendre.leggauss(8)
            inner = (t[:-1, None] + 0.5 * self.grid.dt * (x + 1.0)).ravel()
            vals = self.f_eta1.atom_columns(np.concatenate([t, inner]))
            if np.any(1.0 + vals <= 0.0):
                raise DomainError("1 + η₁ must be positive on the grid and all jump atoms")
        for name in ("alpha1", "alpha2", "beta1", "beta2"):
            arr = getattr(self, "f_" + name)(self.grid.points)
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} must be finite on the grid")

    # -- coefficient callables ------------------------------------------------
    @cached_property
    def f_alpha1(self) -> TimeFunction:
        return time_function(self.alpha1, self.grid)

    @cached_property
    def f_alpha2(self) -> TimeFunction:
        return time_function(self.alpha2, self.grid)

    @cached_property
    def f_beta1(self) -> TimeFunction:
        return time_function(self.beta1, self.grid)

    @cached_property
    def f_beta2(self) -> TimeFunction:
        return time_function(self.beta2, self.grid)

    @cached_property
    def f_eta1(self) -> JumpFunction:
        return jump_function(self.eta1, self.levy.zetas, self.grid)

    @cached_property
    def f_eta2(self) -> JumpFunction:
        return jump_function(self.eta2, self.levy.zetas, self.grid)

    @cached_property
    def f_g0(self) -> TimeFunction:
        return time_function(self.gamma.g0, self.grid)

    @cached_property
    def f_gB(self) -> TimeFunction:
        return time_function(self.gamma.gB, self.grid)

    @cached_property
    def f_gJ(self) -> TimeFunction:
        return time_function(self.gamma.gJ, self.grid)

    @property
    def has_meanfield(self) -> bool:
        return not (self.f_alpha2.is_zero and self.f_beta2.is_zero and (self.f_eta2.is_zero or not self.levy))

    def without_meanfield(self) -> "LinearBSDESpec":
        return LinearBSDESpec(self.grid, self.alpha1, 0.0, self.beta1, 0.0, self.eta1, 0.0,
                              self.gamma, self.xi, self.levy)

    # -- deterministic antiderivatives ----------------------------------------
    @cached_property
    def L_alpha(self):
        """s ↦ ∫₀ˢ α₁."""
        return self.grid.antiderivative(self.f_alpha1)

    @cached_property
    def L_beta(self):
        return self.grid.antiderivative(self.f_beta1)

    @cached_property
    def L_eta(self):
        """s ↦ ∫₀ˢ Σ_j ζ_j η₁(r, ζ_j) ν_j dr (the jump Girsanov shift of J)."""
        if not self.levy:
            return lambda s: np.zeros(np.shape(s))
        zn = self.levy.zetas * self.levy.nus
        return self.grid.antiderivative(lambda r: self.f_eta1.atom_columns(r) @ zn)

    def g(self, t, s):
        """exp ∫ₜˢ α₁ = E[Γ(t, s)]."""
        return np.exp(self.L_alpha(s) - self.L_alpha(t))

    def weighted_antiderivative(self, fn):
        """s ↦ ∫₀ˢ exp(∫₀ʳα₁)·fn(r) dr."""
        La = self.L_alpha
        return self.grid.antiderivative(lambda r: np.exp(La(r)) * fn(r))

    # -- config -----------------------------------------------------------------
    _KEYS = {"grid", "alpha1", "alpha2", "beta1", "beta2", "eta1", "eta2", "gamma", "xi", "levy"}

    @classmethod
    def from_config(cls, d: Mapping, allow_meanfield: bool = True) -> "LinearBSDESpec":
        check_keys(d, cls._KEYS, "bsde")
        grid = parse_grid(require(d, "grid", "bsde"))
        levy = parse_levy(d.get("levy"))
        kw = {}
        for k in ("alpha1", "alpha2", "beta1", "beta2", "eta1", "eta2"):
            if k in d:
                kw[k] = _coef_value(parse_coefficient(d[k], k), grid)
        if "gamma" in d:
            gm = d["gamma"]
            if isinstance(gm, Mapping):
                check_keys(gm, {"g0", "gB", "gJ"}, "gamma")
                kw["gamma"] = GammaDrift(*(_coef_value(parse_coefficient(gm.get(k, 0.0), f"gamma.{k}"), grid)
                                           for k in ("g0", "gB", "gJ")))
            else:
                kw["gamma"] = _coef_value(parse_coefficient(gm, "gamma"), grid)
        xi = TerminalDescriptor.from_config(d.get("xi", {}))
        if not allow_meanfield and any(k in d for k in ("alpha2", "beta2", "eta2")):
            raise ConfigError("mean-field coefficients are not allowed for a plain linear BSDE")
        try:
            return cls(grid, xi=xi, levy=levy, **kw)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def to_dict(self) -> dict:
        def enc(x):
            if isinstance(x, np.ndarray):
                return x.tolist()
            if callable(x):
                return "<callable>"
            return x
        return {"grid": self.grid.to_dict(),
                **{k: enc(getattr(self, k)) for k in ("alpha1", "alpha2", "beta1", "beta2", "eta1", "eta2")},
                "gamma": {"g0": enc(self.gamma.g0), "gB": enc(self.gamma.gB), "gJ": enc(self.gamma.gJ)},
                "xi": self.xi.to_dict(), "levy": self.levy.to_dict()}


def _coef_value(v, grid: TimeGrid):
    # lists become grid tables / per-atom arrays; shapes are validated on use
    return np.asarray(v, dtype=float) if isinstance(v, list) else v
