"""Random variables and processes in the Hermite chaos basis H_α.

A :class:`HermiteChaos` is the finite expansion ``F = Σ c_α H_α`` where
``H_α = Π_j h_{α_j}(θ_j)`` and ``θ_j = ∫ e_j dB``.  Because the H_α are
orthogonal with ``E[H_α²] = α!``, expectations, second moments and Hida norms
are read directly off the coefficients.
"""
from __future__ import annotations

import json
import math
from types import MappingProxyType
from typing import Callable, Iterable, Mapping

import numpy as np

from .grid import TimeGrid
from .hermite import HermiteBasis
from .multiindex import MultiIndex, Truncation, mi_factorial, two_n_pow

__all__ = [
    "HermiteChaos",
    "ChaosProcess",
    "expectation",
    "hida_norm",
    "l2_norm",
    "dual_action",
    "summability_probe",
    "wiener_integral_chaos",
    "brownian_chaos",
    "singular_white_noise",
    "gaussian_psd_check",
]


def _as_index(a) -> MultiIndex:
    return a if isinstance(a, MultiIndex) else MultiIndex(a)


def _merge_truncation(a: Truncation, b: Truncation) -> Truncation:
    return Truncation(max(a.K, b.K), max(a.N, b.N))


class HermiteChaos:
    """Immutable finite map ``MultiIndex -> coefficient`` under a truncation."""

    __slots__ = ("_truncation", "_coef", "clipped_mass")

    def __init__(self, truncation: Truncation, coefficients: Mapping | Iterable = (),
                 *, clipped_mass: float = 0.0, drop_zeros: bool = True):
        items = coefficients.items() if isinstance(coefficients, Mapping) else coefficients
        coef: dict[MultiIndex, float] = {}
        for a, c in items:
            a = _as_index(a)
            c = float(c)
            if not truncation.admits(a):
                raise ValueError(f"{a!r} violates truncation K={truncation.K}, N={truncation.N}")
            if drop_zeros and c == 0.0:
                continue
            coef[a] = coef.get(a, 0.0) + c
        self._truncation = truncation
        self._coef = MappingProxyType(coef)
        self.clipped_mass = float(clipped_mass)

    # -- constructors -------------------------------------------------------
    @classmethod
    def zero(cls, truncation: Truncation) -> "HermiteChaos":
        return cls(truncation, {})

    @classmethod
    def constant(cls, c: float, truncation: Truncation) -> "HermiteChaos":
        return cls(truncation, {MultiIndex(): c})

    @classmethod
    def basis_element(cls, alpha, truncation: Truncation | None = None, c: float = 1.0) -> "HermiteChaos":
        alpha = _as_index(alpha)
        if truncation is None:
            truncation = Truncation(max(1, len(alpha)), alpha.order)
        return cls(truncation, {alpha: c})

    # -- access ---------------------------------------------------------------
    @property
    def truncation(self) -> Truncation:
        return self._truncation

    @property
    def coefficients(self) -> Mapping[MultiIndex, float]:
        return self._coef

    @property
    def K(self) -> int:
        return self._truncation.K

    @property
    def N(self) -> int:
        return self._truncation.N

    def __getitem__(self, alpha) -> float:
        return self._coef.get(_as_index(alpha), 0.0)

    def __len__(self) -> int:
        return len(self._coef)

    def __iter__(self):
        return iter(self._coef)

    def items(self):
        return self._coef.items()

    def max_order(self) -> int:
        return max((a.order for a in self._coef), default=0)

    def restrict_order(self, n: int) -> "HermiteChaos":
        """The homogeneous chaos component of order ``n``."""
        return HermiteChaos(self._truncation, {a: c for a, c in self._coef.items() if a.order == n})

    def with_truncation(self, truncation: Truncation) -> "HermiteChaos":
        return HermiteChaos(truncation, self._coef, clipped_mass=self.clipped_mass)

    # -- linear structure -----------------------------------------------------
    def _combine(self, other: "HermiteChaos", s: float) -> "HermiteChaos":
        if not isinstance(other, HermiteChaos):
            return NotImplemented
        coef = dict(self._coef)
        for a, c in other._coef.items():
            coef[a] = coef.get(a, 0.0) + s * c
        return HermiteChaos(_merge_truncation(self._truncation, other._truncation), coef,
                            clipped_mass=self.clipped_mass + other.clipped_mass)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return self + HermiteChaos.constant(other, self._truncation)
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-other)
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return self * -1.0

    def __mul__(self, s):
        if not isinstance(s, (int, float, np.floating, np.integer)):
            return NotImplemented
        return HermiteChaos(self._truncation, {a: s * c for a, c in self._coef.items()},
                            clipped_mass=self.clipped_mass * float(s) ** 2)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self * (1.0 / s)

    def max_abs_diff(self, other: "HermiteChaos") -> float:
        keys = set(self._coef) | set(other._coef)
        return max((abs(self[a] - other[a]) for a in keys), default=0.0)

    def allclose(self, other: "HermiteChaos", atol: float = 1e-12) -> bool:
        return self.max_abs_diff(other) <= atol

    def __repr__(self) -> str:
        head = ", ".join(f"{list(a)}: {c:.6g}" for a, c in list(self._coef.items())[:6])
        more = " ..." if len(self._coef) > 6 else ""
        return f"HermiteChaos(K={self.K}, N={self.N}, {{{head}{more}}})"

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        rows = sorted(self._coef.items(), key=lambda kv: (kv[0].order, tuple(kv[0])))
        return {
            "truncation": self._truncation.to_dict(),
            "coefficients": [{"alpha": list(a), "c": c} for a, c in rows],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: Mapping) -> "HermiteChaos":
        tr = d["truncation"]
        trunc = Truncation(int(tr["K"]), int(tr["N"]))
        return cls(trunc, [(MultiIndex(r["alpha"]), float(r["c"])) for r in d["coefficients"]])

    @classmethod
    def from_json(cls, s: str) -> "HermiteChaos":
        return cls.from_dict(json.loads(s))


class ChaosProcess:
    """Chaos expansion with time-dependent coefficients a_α(t_i) on a grid."""

    __slots__ = ("_truncation", "_grid", "_coef")

    def __init__(self, truncation: Truncation, grid: TimeGrid, coefficients: Mapping | Iterable = ()):
        items = coefficients.items() if isinstance(coefficients, Mapping) else coefficients
        coef: dict[MultiIndex, np.ndarray] = {}
        for a, v in items:
            a = _as_index(a)
            if not truncation.admits(a):
                raise ValueError(f"{a!r} violates truncation K={truncation.K}, N={truncation.N}")
            v = np.broadcast_to(np.asarray(v, dtype=float), (len(grid),)).copy()
            if a in coef:
                v = v + coef[a]
            v.setflags(write=False)
            coef[a] = v
        self._truncation = truncation
        self._grid = grid
        self._coef = MappingProxyType(coef)

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable[[float], HermiteChaos],
                      truncation: Truncation | None = None) -> "ChaosProcess":
        """Sample ``fn(t_i)`` at every grid point and stack the coefficients."""
        samples = [fn(float(t)) for t in grid.points]
        if truncation is None:
            truncation = samples[0].truncation
            for s in samples[1:]:
                truncation = _merge_truncation(truncation, s.truncation)
        coef: dict[MultiIndex, np.ndarray] = {}
        for i, s in enumerate(samples):
            for a, c in s.items():
                if a not in coef:
                    coef[a] = np.zeros(len(grid))
                coef[a][i] = c
        return cls(truncation, grid, coef)

    @classmethod
    def deterministic(cls, grid: TimeGrid, values, truncation: Truncation) -> "ChaosProcess":
        return cls(truncation, grid, {MultiIndex(): np.asarray(values, dtype=float)})

    @property
    def truncation(self) -> Truncation:
        return self._truncation

    @property
    def grid(self) -> TimeGrid:
        return self._grid

    @property
    def coefficients(self) -> Mapping[MultiIndex, np.ndarray]:
        return self._coef

    def items(self):
        return self._coef.items()

    def __len__(self):
        return len(self._coef)

    def at(self, i: int) -> HermiteChaos:
        """The random variable at grid index ``i``."""
        return HermiteChaos(self._truncation, {a: v[i] for a, v in self._coef.items()})

    def at_time(self, t: float) -> HermiteChaos:
        return self.at(self._grid.index(t))

    def __add__(self, other: "ChaosProcess") -> "ChaosProcess":
        coef = {a: np.array(v) for a, v in self._coef.items()}
        for a, v in other._coef.items():
            coef[a] = coef.get(a, 0.0) + v
        return ChaosProcess(_merge_truncation(self._truncation, other._truncation), self._grid, coef)

    def __mul__(self, s) -> "ChaosProcess":
        """Scalar multiple or pointwise multiple by a deterministic grid function."""
        s = np.asarray(s, dtype=float)
        return ChaosProcess(self._truncation, self._grid, {a: s * v for a, v in self._coef.items()})

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other

    def to_dict(self) -> dict:
        return {
            "truncation": self._truncation.to_dict(),
            "grid": self._grid.to_dict(),
            "coefficients": [{"alpha": list(a), "c": v.tolist()} for a, v in self._coef.items()],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChaosProcess":
        tr = d["truncation"]
        g = d["grid"]
        return cls(Truncation(int(tr["K"]), int(tr["N"])), TimeGrid(float(g["T"]), int(g["M"])),
                   [(MultiIndex(r["alpha"]), np.asarray(r["c"], dtype=float)) for r in d["coefficients"]])


# ---------------------------------------------------------------------------
# scalar functionals
# ---------------------------------------------------------------------------

def expectation(F: HermiteChaos) -> float:
    """E[F] = c_0 (all other H_α have mean zero)."""
    return F[MultiIndex()]


def hida_norm(F: HermiteChaos, k: float = 0.0) -> float:
    """sqrt(Σ α! c_α² (2ℕ)^{kα}); k = 0 is the L²(P) norm, k < 0 a (S)_{-q} norm."""
    s = 0.0
    for a, c in F.items():
        s += mi_factorial(a) * c * c * two_n_pow(a, k)
    return math.sqrt(s)


def l2_norm(F: HermiteChaos) -> float:
    return hida_norm(F, 0.0)


def dual_action(F: HermiteChaos, f: HermiteChaos) -> float:
    """⟨F, f⟩ = Σ α! a_α b_α."""
    small, large = (F, f) if len(F) <= len(f) else (f, F)
    s = 0.0
    for a, c in small.items():
        d = large[a]
        if d:
            s += mi_factorial(a) * c * d
    return s


def summability_probe(q: float, cutoff: Truncation) -> float:
    """Σ (2ℕ)^{-qα} over all α with length ≤ K and |α| ≤ N.

    Computed by a generating-polynomial recursion over the variables, so the
    cost is O(K N²) rather than the number of indices.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    N = cutoff.N
    dp = np.zeros(N + 1)
    dp[0] = 1.0
    for j in range(1, cutoff.K + 1):
        r = (2.0 * j) ** (-q)
        powers = r ** np.arange(N + 1)
        new = np.zeros(N + 1)
        for n in range(N + 1):
            new[n] = np.dot(dp[: n + 1][::-1], powers[: n + 1])
        dp = new
    return float(dp.sum())


# ---------------------------------------------------------------------------
# first-order elements
# ---------------------------------------------------------------------------

def _first_order(coeffs: np.ndarray, truncation: Truncation) -> HermiteChaos:
    return HermiteChaos(truncation, {MultiIndex.unit(k + 1): c for k, c in enumerate(coeffs)})


def wiener_integral_chaos(f, basis: HermiteBasis, *, coefficients: bool = False,
                          truncation: Truncation | None = None) -> HermiteChaos:
    """w_f = ∫ f dB = Σ_k (f, e_k) H_{ε^(k)}.

    ``f`` may be grid samples of a smooth function on [0, T], a callable
    (integrated on the kernel mesh over [0, T], exact for grid-aligned
    breakpoints), or — with ``coefficients=True`` — the vector ((f, e_k))_k.
    """
    truncation = truncation or Truncation(basis.K, 1)
    if callable(f):
        c = basis.project_callable(f)
    elif coefficients:
        c = np.zeros(basis.K)
        f = np.asarray(f, dtype=float)
        c[: len(f)] = f
    else:
        c = basis.project_grid(f)
    return _first_order(c[: truncation.K], truncation)


def brownian_chaos(t: float, basis: HermiteBasis, truncation: Truncation | None = None) -> HermiteChaos:
    """B(t) = Σ_k E_k(t) H_{ε^(k)}."""
    truncation = truncation or Truncation(basis.K, 1)
    return _first_order(basis.E(t)[: truncation.K], truncation)


def singular_white_noise(t: float, basis: HermiteBasis, truncation: Truncation | None = None) -> HermiteChaos:
    """Ḃ(t) = Σ_k e_k(t) H_{ε^(k)} (a generalised random variable)."""
    truncation = truncation or Truncation(basis.K, 1)
    return _first_order(basis.e(t)[: truncation.K], truncation)


# ---------------------------------------------------------------------------
# positive definiteness of the characteristic functional
# ---------------------------------------------------------------------------

def gaussian_psd_check(phis, grid: TimeGrid | None = None, weights=None) -> float:
    """Smallest eigenvalue of [exp(-½‖φ_j - φ_l‖²)]_{j,l}.

    ``phis`` is an (n, M+1) array of test functions sampled on ``grid``; the
    squared L² distances use the grid quadrature (or explicit ``weights``).
    """
    P = np.atleast_2d(np.asarray(phis, dtype=float))
    if weights is None:
        weights = grid.quad_weights if grid is not None else np.ones(P.shape[1])
    w = np.asarray(weights, dtype=float)
    G = (P * w) @ P.T
    sq = np.diag(G)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * G, 0.0)
    g = np.exp(-0.5 * d2)
    return float(np.linalg.eigvalsh(0.5 * (g + g.T))[0])
