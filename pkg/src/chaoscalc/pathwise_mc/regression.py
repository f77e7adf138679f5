"""Least-squares conditional expectations E[Y | F_t] on polynomial features."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from ..errors import ChaosCalcError
from .ensemble import MCEnsemble
from .evaluation import compensated_jump_process

__all__ = ["RegressionResult", "regress_conditional", "state_features", "polynomial_design"]


@dataclass(frozen=True)
class RegressionResult:
    fitted: np.ndarray
    coef: np.ndarray
    exponents: tuple
    center: np.ndarray
    scale: np.ndarray

    def predict(self, features: np.ndarray) -> np.ndarray:
        if self.exponents == ((),):
            return np.full(np.atleast_2d(np.asarray(features).T).T.shape[0], self.coef[0])
        X = polynomial_design(features, self.exponents, self.center, self.scale)
        return X @ self.coef


def state_features(ens: MCEnsemble, t: float) -> np.ndarray:
    """F_t-measurable state: B(t) and, with jumps, J(t) = ∫_0^t∫ ζ Ñ(ds,dζ)."""
    i = ens.grid.index(t)
    cols = [ens.brownian[:, i]]
    if ens.levy:
        cache = ens.__dict__.setdefault("_jstate", {})
        if "J" not in cache:
            cache["J"] = compensated_jump_process(ens, lambda s, z: z)
        cols.append(cache["J"][:, i])
    return np.column_stack(cols)


def _exponents(d: int, degree: int) -> tuple:
    exps = []
    for n in range(degree + 1):
        for combo in combinations_with_replacement(range(d), n):
            e = [0] * d
            for c in combo:
                e[c] += 1
            exps.append(tuple(e))
    return tuple(exps)


def polynomial_design(features, exponents, center, scale) -> np.ndarray:
    Z = (np.atleast_2d(np.asarray(features, dtype=float).T).T - center) / scale
    cols = []
    for e in exponents:
        col = np.ones(Z.shape[0])
        for j, p in enumerate(e):
            if p:
                col = col * Z[:, j] ** p
        cols.append(col)
    return np.column_stack(cols)


def regress_conditional(targets, t: float | None, ens: MCEnsemble | None = None, basis_degree: int = 3,
                        features: np.ndarray | None = None, weights=None, ridge: float = 1e-8) -> RegressionResult:
    """Ridge least squares of ``targets`` on polynomials (total degree ≤ basis_degree).

    Features default to :func:`state_features` at time ``t``; constant feature
    columns (e.g. at t = 0) are dropped.  Features are standardised so the
    ridge parameter is scale free.  ``weights`` gives a weighted projection
    (used for conditional expectations under an equivalent measure).
    """
    y = np.asarray(targets, dtype=float)
    if y.size and np.all(y == y[0]):
        # constant target: the projection is that constant, exactly
        fitted = np.full(y.shape, y[0])
        return RegressionResult(fitted, np.array([y[0]]), ((),), np.zeros(0), np.ones(0))
    if features is None:
        if ens is None or t is None:
            raise ValueError("need either explicit features or (t, ensemble)")
        features = state_features(ens, t)
    Fm = np.asarray(features, dtype=float)
    if Fm.ndim == 1:
        Fm = Fm[:, None]
    center = Fm.mean(axis=0)
    scale = Fm.std(axis=0)
    live = scale > 1e-12 * np.maximum(1.0, np.abs(center))
    Fm, center, scale = Fm[:, live], center[live], scale[live]
    exps = _exponents(Fm.shape[1], basis_degree)
    X = polynomial_design(Fm, exps, center, scale)
    if X.shape[0] <= X.shape[1]:
        raise ChaosCalcError("too few paths for the regression basis")
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    XtW = X.T * w
    A = XtW @ X / len(y)
    b = XtW @ y / len(y)
    pen = np.full(len(A), ridge)
    pen[0] = 0.0  # the intercept is not shrunk
    A_r = A + np.diag(pen)
    if np.linalg.cond(A_r) > 1e13:
        raise ChaosCalcError("regression design is rank deficient after ridge regularisation")
    coef = np.linalg.solve(A_r, b)
    full_center = np.zeros(len(live))
    full_scale = np.ones(len(live))
    full_center[live], full_scale[live] = center, scale
    # re-express exponents over all original features (dead ones get power 0)
    live_idx = np.nonzero(live)[0]
    exps_full = []
    for e in exps:
        ef = [0] * len(live)
        for j, p in zip(live_idx, e):
            ef[j] = p
        exps_full.append(tuple(ef))
    return RegressionResult(X @ coef, coef, tuple(exps_full), full_center, full_scale)
