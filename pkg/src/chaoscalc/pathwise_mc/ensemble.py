"""Seeded Monte Carlo ensembles: Gaussian chaos coordinates plus compound-Poisson jumps."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..chaos_core.grid import TimeGrid
from ..chaos_core.hermite import HermiteBasis, hermite_polys

__all__ = ["LevyModel", "MCEnsemble", "MCEstimate", "build_ensemble", "mc_mean", "BLOCK_SIZE"]

BLOCK_SIZE = 8192


@dataclass(frozen=True)
class LevyModel:
    """Finite-activity jump measure ν = Σ_j ν_j δ_{ζ_j}."""

    atoms: tuple = ()

    def __post_init__(self):
        atoms = tuple((float(z), float(n)) for z, n in self.atoms)
        for z, n in atoms:
            if z == 0.0:
                raise ValueError("jump marks must be non-zero")
            if not n > 0.0:
                raise ValueError("jump intensities must be positive")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def from_lists(cls, zetas, nus) -> "LevyModel":
        return cls(tuple(zip(zetas, nus)))

    @property
    def zetas(self) -> np.ndarray:
        return np.array([z for z, _ in self.atoms])

    @property
    def nus(self) -> np.ndarray:
        return np.array([n for _, n in self.atoms])

    @property
    def total_intensity(self) -> float:
        return float(sum(n for _, n in self.atoms))

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def __bool__(self) -> bool:
        return bool(self.atoms)

    def to_dict(self) -> dict:
        return {"atoms": [{"zeta": z, "nu": n} for z, n in self.atoms]}


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    n: int
    seed: int | None = None

    def within(self, target: float, k: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.estimate - target) <= k * self.stderr + slack

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "stderr": self.stderr, "n": self.n, "seed": self.seed}


def mc_mean(x, seed: int | None = None, weights=None) -> MCEstimate:
    """Sample mean with standard error; optional weights give E[w x] (not normalised)."""
    x = np.asarray(x, dtype=float)
    if weights is not None:
        x = x * np.asarray(weights, dtype=float)
    n = x.shape[0]
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    return MCEstimate(float(np.mean(x)), sd / np.sqrt(n), n, seed)


def _tail_factor(basis: HermiteBasis) -> np.ndarray:
    """Square-root factor of Cov[B(s) − Σ E_k(s)θ_k, same at t] on the grid."""
    t = basis.grid.points
    E = basis.cumulative
    C = np.minimum.outer(t, t) - E.T @ E
    lam, V = np.linalg.eigh(0.5 * (C + C.T))
    keep = lam > 1e-14 * max(lam.max(), 1e-300)
    return V[:, keep] * np.sqrt(lam[keep])


@dataclass(frozen=True, eq=False)
class MCEnsemble:
    """θ_k ~ iid N(0,1), a Gaussian remainder completing B on the grid, and jump records.

    The Brownian path on the grid is ``B(t_i) = Σ_k E_k(t_i) θ_k + R(t_i)``
    where ``R`` is an independent centred Gaussian process with covariance
    ``min(s,t) − Σ_k E_k(s)E_k(t)`` — the part of B not seen by e_1..e_K.  So
    B has exactly the Brownian law on the grid while staying coupled to the
    chaos coordinates; ``truncated=True`` drops R.
    """

    seed: int
    n_paths: int
    basis: HermiteBasis
    levy: LevyModel
    theta: np.ndarray = field(repr=False)
    remainder: np.ndarray = field(repr=False)
    jump_path: np.ndarray = field(repr=False)
    jump_time: np.ndarray = field(repr=False)
    jump_atom: np.ndarray = field(repr=False)

    @property
    def grid(self) -> TimeGrid:
        return self.basis.grid

    @property
    def K(self) -> int:
        return self.basis.K

    # -- Brownian path ------------------------------------------------------
    @cached_property
    def brownian(self) -> np.ndarray:
        """Completed Brownian paths on the grid, shape (n_paths, M+1)."""
        B = self.theta @ self.basis.cumulative + self.remainder
        B[:, 0] = 0.0
        B.setflags(write=False)
        return B

    @cached_property
    def brownian_truncated(self) -> np.ndarray:
        B = self.theta @ self.basis.cumulative
        B.setflags(write=False)
        return B

    @cached_property
    def increments(self) -> np.ndarray:
        d = np.diff(self.brownian, axis=1)
        d.setflags(write=False)
        return d

    # -- jumps --------------------------------------------------------------
    @cached_property
    def jump_counts(self) -> np.ndarray:
        return np.bincount(self.jump_path, minlength=self.n_paths)

    @cached_property
    def jump_cell(self) -> np.ndarray:
        """Grid cell c with t_c < τ ≤ t_{c+1} for each jump."""
        c = np.searchsorted(self.grid.points, self.jump_time, side="left") - 1
        return np.clip(c, 0, self.grid.M - 1)

    def jump_sum_process(self, values: np.ndarray) -> np.ndarray:
        """Σ_{τ_i ≤ t} values_i at every grid time, shape (n_paths, M+1)."""
        out = np.zeros((self.n_paths, self.grid.M + 1))
        np.add.at(out, (self.jump_path, self.jump_cell + 1), values)
        return np.cumsum(out, axis=1)

    # -- Hermite values -----------------------------------------------------
    def hermite_table(self, N: int) -> np.ndarray:
        """h_n(θ_k) for n ≤ N: shape (N+1, n_paths, K) (cached by maximum order)."""
        cache = self.__dict__.setdefault("_htab", {})
        if "tab" not in cache or cache["tab"].shape[0] < N + 1:
            cache["tab"] = hermite_polys(N, self.theta)
        return cache["tab"]

    def describe(self) -> dict:
        return {
            "seed": self.seed,
            "n_paths": self.n_paths,
            "K": self.K,
            "grid": self.grid.to_dict(),
            "levy": self.levy.to_dict(),
        }


def build_ensemble(seed: int, n_paths: int, K: int, grid: TimeGrid,
                   levy: LevyModel | None = None, basis: HermiteBasis | None = None) -> MCEnsemble:
    """Draw a reproducible ensemble in fixed blocks of ``BLOCK_SIZE`` paths.

    Block b uses the independent stream ``SeedSequence(seed).spawn(...)[b]``, so
    the result depends only on (seed, n_paths, K, grid, levy).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    levy = levy or LevyModel()
    if basis is None:
        basis = HermiteBasis(K, grid)
    elif basis.K != K or basis.grid != grid:
        raise ValueError("basis does not match K/grid")
    L = _tail_factor(basis)
    n_blocks = -(-n_paths // BLOCK_SIZE)
    streams = np.random.SeedSequence(seed).spawn(n_blocks)
    lam_T = levy.total_intensity * grid.T
    probs = levy.nus / levy.total_intensity if levy else None
    thetas, rems, jp, jt, ja = [], [], [], [], []
    for b, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        nb = min(BLOCK_SIZE, n_paths - b * BLOCK_SIZE)
        thetas.append(rng.standard_normal((nb, K)))
        rems.append(rng.standard_normal((nb, L.shape[1])) @ L.T)
        if levy:
            counts = rng.poisson(lam_T, nb)
            tot = int(counts.sum())
            jp.append(np.repeat(np.arange(nb) + b * BLOCK_SIZE, counts))
            jt.append(rng.uniform(0.0, grid.T, tot))
            ja.append(rng.choice(levy.n_atoms, size=tot, p=probs))
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dtype=dt)
    jump_path, jump_time, jump_atom = cat(jp, np.int64), cat(jt, float), cat(ja, np.int64)
    order = np.lexsort((jump_time, jump_path))
    arrays = [np.concatenate(thetas), np.concatenate(rems), jump_path[order], jump_time[order], jump_atom[order]]
    for a in arrays:
        a.setflags(write=False)
    return MCEnsemble(int(seed), int(n_paths), basis, levy, *arrays)
