"""Strict parsing helpers for JSON problem configurations.

Unknown keys are rejected so that typos never silently fall back to defaults.
"""
from __future__ import annotations

from typing import Any, Iterable, Mapping

from .chaos_core.grid import TimeGrid
from .errors import ConfigError
from .pathwise_mc.ensemble import LevyModel

__all__ = ["check_keys", "require", "parse_grid", "parse_levy", "parse_coefficient", "parse_number"]


def check_keys(d: Any, allowed: Iterable[str], where: str) -> Mapping:
    if not isinstance(d, Mapping):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {extra}; allowed: {sorted(allowed)}")
    return d


def require(d: Mapping, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing required key '{key}'")
    return d[key]


def parse_number(x, where: str, positive: bool = False) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {x!r}")
    if positive and not x > 0:
        raise ConfigError(f"{where}: must be positive, got {x!r}")
    return float(x)


def parse_grid(d: Any, where: str = "grid") -> TimeGrid:
    check_keys(d, {"T", "M"}, where)
    T = parse_number(require(d, "T", where), f"{where}.T", positive=True)
    M = require(d, "M", where)
    if isinstance(M, bool) or not isinstance(M, int) or M < 2:
        raise ConfigError(f"{where}.M: expected an integer >= 2, got {M!r}")
    return TimeGrid(T, M)


def parse_levy(d: Any, where: str = "levy") -> LevyModel:
    if d is None:
        return LevyModel()
    check_keys(d, {"atoms"}, where)
    atoms = d.get("atoms", [])
    if not isinstance(atoms, list):
        raise ConfigError(f"{where}.atoms: expected a list")
    out = []
    for i, a in enumerate(atoms):
        w = f"{where}.atoms[{i}]"
        check_keys(a, {"zeta", "nu"}, w)
        z = parse_number(require(a, "zeta", w), f"{w}.zeta")
        n = parse_number(require(a, "nu", w), f"{w}.nu", positive=True)
        if z == 0.0:
            raise ConfigError(f"{w}.zeta: jump marks must be non-zero")
        out.append((z, n))
    return LevyModel(tuple(out))


def parse_coefficient(x, where: str, length: int | None = None, nested: int | None = None):
    """A number, or a list of numbers (grid table of ``length`` or per-atom list)."""
    if x is None:
        return None
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return float(x)
    if isinstance(x, list):
        vals = []
        for i, v in enumerate(x):
            if isinstance(v, list):
                vals.append([parse_number(u, f"{where}[{i}]") for u in v])
            else:
                vals.append(parse_number(v, f"{where}[{i}]"))
        return vals
    raise ConfigError(f"{where}: expected a number or a list, got {x!r}")
