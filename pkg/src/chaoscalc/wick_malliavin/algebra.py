"""Wick products, Wick powers/exponentials and ordinary products of chaos elements."""
from __future__ import annotations

import math
from collections import defaultdict
from itertools import combinations, permutations

import numpy as np

from ..chaos_core.chaos import HermiteChaos, hida_norm
from ..chaos_core.kernels import KernelChaos
from ..chaos_core.multiindex import MultiIndex, Truncation, mi_factorial
from ..errors import TruncationError

__all__ = [
    "DEFAULT_ORDER_CAP",
    "wick_product",
    "wick_power",
    "wick_exp",
    "wick_exp_tail_bound",
    "ordinary_product",
    "kernel_product",
]

DEFAULT_ORDER_CAP = 6


def _finish(coef: dict, K: int, N_out: int, strict: bool, what: str) -> HermiteChaos:
    kept, dropped = {}, []
    mass = 0.0
    for a, c in coef.items():
        if a.order > N_out:
            if c != 0.0:
                dropped.append(a)
                mass += mi_factorial(a) * c * c
        else:
            kept[a] = c
    mass = math.sqrt(mass)
    if dropped and strict:
        raise TruncationError(f"{what}: {len(dropped)} indices beyond order {N_out}", mass, dropped)
    return HermiteChaos(Truncation(K, N_out), kept, clipped_mass=mass)


def wick_product(X: HermiteChaos, Y: HermiteChaos, cap: int | None = DEFAULT_ORDER_CAP,
                 strict: bool = True) -> HermiteChaos:
    """X ⋄ Y = Σ_{α,β} a_α b_β H_{α+β}.

    The result is truncated at order min(N_X + N_Y, cap).  In strict mode any
    index beyond that raises :class:`TruncationError` with the dropped L² mass;
    otherwise it is clipped and the mass recorded in ``clipped_mass``.
    """
    if X.K != Y.K:
        raise ValueError(f"variable truncations differ: K={X.K} vs K={Y.K}")
    N_out = X.N + Y.N if cap is None else min(X.N + Y.N, cap)
    coef: dict[MultiIndex, float] = defaultdict(float)
    for a, ca in X.items():
        for b, cb in Y.items():
            coef[a + b] += ca * cb
    out = _finish(coef, X.K, N_out, strict, "wick_product")
    out.clipped_mass += X.clipped_mass + Y.clipped_mass
    return out


def wick_power(X: HermiteChaos, n: int, cap: int | None = DEFAULT_ORDER_CAP,
               strict: bool = True) -> HermiteChaos:
    """X^{⋄n} (with X^{⋄0} = 1)."""
    if n < 0:
        raise ValueError("Wick power must be non-negative")
    result = HermiteChaos.constant(1.0, Truncation(X.K, 0))
    for _ in range(n):
        result = wick_product(result, X, cap=cap, strict=strict)
    return result


def wick_exp_tail_bound(X: HermiteChaos, terms: int) -> float:
    """‖X₀‖^{n}/n! for n = terms + 1, with X₀ = X − E[X]: size of the first omitted term."""
    x0 = hida_norm(X - X[MultiIndex()], 0.0)
    n = terms + 1
    return math.exp(n * math.log(x0) - math.lgamma(n + 1)) if x0 > 0 else 0.0


def wick_exp(X: HermiteChaos, terms: int = 12, strict: bool = True,
             tail_tol: float | None = None) -> HermiteChaos:
    """exp^⋄ X ≈ e^{E[X]} Σ_{n ≤ terms} X₀^{⋄n}/n!.

    The constant part is exponentiated exactly and factored out (constants
    Wick-multiply as ordinary numbers).  With ``tail_tol`` set, the first
    omitted term's norm bound must be below it.
    """
    if terms < 1:
        raise ValueError("terms must be positive")
    c0 = X[MultiIndex()]
    X0 = HermiteChaos(X.truncation, {a: c for a, c in X.items() if a.order > 0})
    if tail_tol is not None:
        bound = wick_exp_tail_bound(X, terms)
        if bound > tail_tol:
            raise TruncationError(f"wick_exp with {terms} terms: tail bound {bound:.2e} > {tail_tol:.1e}", bound)
    cap = terms * max(X0.max_order(), 1)
    total: dict[MultiIndex, float] = {MultiIndex(): 1.0}
    power = HermiteChaos.constant(1.0, Truncation(X.K, 0))
    fact = 1.0
    for n in range(1, terms + 1):
        power = wick_product(power, X0, cap=cap, strict=strict)
        fact *= n
        for a, c in power.items():
            total[a] = total.get(a, 0.0) + c / fact
    scale = math.exp(c0)
    return HermiteChaos(Truncation(X.K, cap), {a: scale * c for a, c in total.items()})


# ---------------------------------------------------------------------------
# ordinary (pointwise) products
# ---------------------------------------------------------------------------

def _hermite_linearization(a: int, b: int) -> list[tuple[int, float]]:
    """h_a h_b = Σ_r r! C(a,r) C(b,r) h_{a+b-2r}."""
    return [(a + b - 2 * r, math.factorial(r) * math.comb(a, r) * math.comb(b, r))
            for r in range(min(a, b) + 1)]


def ordinary_product(X: HermiteChaos, Y: HermiteChaos) -> HermiteChaos:
    """Pointwise product X·Y re-expanded in the H_α basis.

    Uses the one-variable linearisation h_a h_b = Σ_r r! C(a,r) C(b,r) h_{a+b−2r}
    coordinate by coordinate (only over the joint support); exact within the
    K Gaussian variables.
    """
    K = max(X.K, Y.K)
    coef: dict[MultiIndex, float] = defaultdict(float)
    ys = [(dict(b.support()), cb) for b, cb in Y.items()]
    for a, ca in X.items():
        da = dict(a.support())
        for db, cb in ys:
            pos = sorted(set(da) | set(db))
            partial: list[tuple[dict, float]] = [({}, ca * cb)]
            for j in pos:
                lin = _hermite_linearization(da.get(j, 0), db.get(j, 0))
                partial = [({**ent, j: e} if e else ent, w * c) for ent, w in partial for e, c in lin]
            for ent, w in partial:
                coef[_from_support(ent)] += w
    return HermiteChaos(Truncation(K, X.N + Y.N), dict(coef))


def _from_support(ent: dict) -> MultiIndex:
    if not ent:
        return MultiIndex()
    v = [0] * max(ent)
    for j, e in ent.items():
        v[j - 1] = e
    return MultiIndex(v)


def _matchings(n: int, m: int):
    """Partial matchings between {0..n-1} and {0..m-1} as lists of pairs."""
    for r in range(min(n, m) + 1):
        for left in combinations(range(n), r):
            for right in permutations(range(m), r):
                yield list(zip(left, right))


def kernel_product(F: KernelChaos, G: KernelChaos, max_order: int | None = None) -> KernelChaos:
    """Pointwise product of two kernel elements by the Wick diagram formula.

    For rank-one terms, (w_{a_1} ⋄ ... ⋄ w_{a_n})(w_{b_1} ⋄ ... ⋄ w_{b_m}) is the
    sum over partial matchings of Π (a_i, b_j) times the Wick product of the
    unmatched factors, which stays in rank-one form.
    """
    F._compatible(G)
    off = len(F.factors)
    factors = np.vstack([F.factors, G.factors])
    Gm = (factors * F.mesh.weights) @ factors.T
    parts_F = [(0, np.array([F.f0]), np.zeros((1, 0), dtype=np.int64))] + \
              [(n, w, ids) for n, (w, ids) in F.terms.items()]
    parts_G = [(0, np.array([G.f0]), np.zeros((1, 0), dtype=np.int64))] + \
              [(n, w, ids + off) for n, (w, ids) in G.terms.items()]
    f0 = 0.0
    acc: dict[int, tuple[list, list]] = {}
    for n, wF, idF in parts_F:
        for m, wG, idG in parts_G:
            for match in _matchings(n, m):
                mi = {i for i, _ in match}
                mj = {j for _, j in match}
                rest_i = [i for i in range(n) if i not in mi]
                rest_j = [j for j in range(m) if j not in mj]
                order = len(rest_i) + len(rest_j)
                # weights: outer product of term weights times contraction factors
                wgt = np.outer(wF, wG)
                for i, j in match:
                    wgt = wgt * Gm[np.ix_(idF[:, i], idG[:, j])]
                if order == 0:
                    f0 += float(wgt.sum())
                    continue
                ids = np.concatenate([
                    np.repeat(idF[:, rest_i], len(wG), axis=0),
                    np.tile(idG[:, rest_j], (len(wF), 1)),
                ], axis=1)
                acc.setdefault(order, ([], []))
                acc[order][0].append(wgt.ravel())
                acc[order][1].append(ids)
    terms = {k: (np.concatenate(w), np.vstack(i)) for k, (w, i) in acc.items()}
    mo = max_order if max_order is not None else F.max_order + G.max_order
    return KernelChaos(F.grid, F.mesh, f0, factors, terms, max(mo, max(terms, default=0)))
