"""Finite multi-indices α = (α_1, α_2, ...) labelling the Hermite chaos basis."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Iterable, Iterator

__all__ = [
    "MultiIndex",
    "Truncation",
    "mi_factorial",
    "two_n_pow",
    "iter_indices",
    "index_from_tuple",
]


class MultiIndex(tuple):
    """Canonical multi-index: non-negative entries, no trailing zeros.

    Being a tuple, it hashes and compares structurally, so canonical instances
    are valid dictionary keys.  Position ``j`` (1-based) holds α_j.
    """

    __slots__ = ()

    def __new__(cls, entries: Iterable[int] = ()):
        vals = [int(a) for a in entries]
        if any(a < 0 for a in vals):
            raise ValueError(f"multi-index entries must be non-negative: {vals}")
        while vals and vals[-1] == 0:
            vals.pop()
        return super().__new__(cls, vals)

    @classmethod
    def unit(cls, k: int) -> "MultiIndex":
        """ε^(k): a single 1 in position k (1-based)."""
        if k < 1:
            raise ValueError("unit index position is 1-based")
        return cls([0] * (k - 1) + [1])

    @property
    def order(self) -> int:
        return sum(self)

    @property
    def length(self) -> int:
        return len(self)

    def entry(self, k: int) -> int:
        return self[k - 1] if 1 <= k <= len(self) else 0

    def __add__(self, other):  # elementwise, not concatenation
        other = tuple(other)
        n = max(len(self), len(other))
        a = tuple(self) + (0,) * (n - len(self))
        b = other + (0,) * (n - len(other))
        return MultiIndex(x + y for x, y in zip(a, b))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        other = tuple(other)
        n = max(len(self), len(other))
        a = tuple(self) + (0,) * (n - len(self))
        b = other + (0,) * (n - len(other))
        return MultiIndex(x - y for x, y in zip(a, b))

    def add_unit(self, k: int) -> "MultiIndex":
        vals = list(self) + [0] * max(0, k - len(self))
        vals[k - 1] += 1
        return MultiIndex(vals)

    def sub_unit(self, k: int) -> "MultiIndex":
        if self.entry(k) == 0:
            raise ValueError(f"cannot lower position {k} of {tuple(self)}")
        vals = list(self)
        vals[k - 1] -= 1
        return MultiIndex(vals)

    def support(self) -> list[tuple[int, int]]:
        """(position, exponent) pairs with non-zero exponent, positions 1-based."""
        return [(j + 1, a) for j, a in enumerate(self) if a]

    def to_sorted_tuple(self) -> tuple[int, ...]:
        """Non-decreasing tuple of 1-based positions, position j repeated α_j times."""
        out: list[int] = []
        for j, a in self.support():
            out.extend([j] * a)
        return tuple(out)

    def __repr__(self) -> str:
        return f"MultiIndex({list(self)})"


def index_from_tuple(positions: Iterable[int]) -> MultiIndex:
    """Inverse of :meth:`MultiIndex.to_sorted_tuple`."""
    counts: dict[int, int] = {}
    for p in positions:
        counts[p] = counts.get(p, 0) + 1
    if not counts:
        return MultiIndex()
    vals = [0] * max(counts)
    for p, c in counts.items():
        vals[p - 1] = c
    return MultiIndex(vals)


def mi_factorial(alpha: Iterable[int]) -> int:
    """α! = Π α_j!  (exact integer; raises OverflowError if not representable as float)."""
    out = 1
    for a in alpha:
        out *= math.factorial(int(a))
    if out > 1e308:
        raise OverflowError(f"α! too large for float arithmetic: {tuple(alpha)}")
    return out


def log_mi_factorial(alpha: Iterable[int]) -> float:
    return float(sum(math.lgamma(int(a) + 1) for a in alpha))


def two_n_pow(alpha: Iterable[int], q: float) -> float:
    """(2ℕ)^{qα} = Π_j (2j)^{q α_j}."""
    s = 0.0
    for j, a in enumerate(alpha, start=1):
        if a:
            s += q * a * math.log(2 * j)
    return math.exp(s)


@dataclass(frozen=True)
class Truncation:
    """Finite projection: at most ``K`` variables, at most order ``N``."""

    K: int
    N: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        if int(self.N) != self.N or self.N < 0:
            raise ValueError(f"N must be a non-negative integer, got {self.N}")

    def admits(self, alpha: MultiIndex) -> bool:
        return len(alpha) <= self.K and alpha.order <= self.N

    def with_order(self, N: int) -> "Truncation":
        return Truncation(self.K, N)

    def to_dict(self) -> dict:
        return {"K": self.K, "N": self.N}


def iter_indices(K: int, N: int, exact: int | None = None) -> Iterator[MultiIndex]:
    """All multi-indices with length ≤ K and order ≤ N (or order == exact)."""
    orders = [exact] if exact is not None else range(N + 1)
    for n in orders:
        for combo in combinations_with_replacement(range(1, K + 1), n):
            yield index_from_tuple(combo)
