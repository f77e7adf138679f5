"""chaoscalc: truncated Wiener chaos calculus with a Monte Carlo bridge.

Subpackages
-----------
chaos_core      multi-indices, Hermite basis, H_α expansions and iterated-integral kernels
wick_malliavin  Wick algebra, Hida-Malliavin derivative, Skorohod integral, Clark-Ocone
pathwise_mc     path ensembles, pathwise evaluation, regression for conditional expectations
linear_bsde     closed-form linear and mean-field BSDEs with jumps
bsvie           resolvent kernels and closed-form linear BSVIEs
control_mp      maximum-principle solvers (LQ jump-diffusion, cash flow with memory)

``chaoscalc.acceptance`` holds the acceptance suite and ``chaoscalc.cli`` the
command-line interface.
"""
from . import bsvie, chaos_core, control_mp, linear_bsde, pathwise_mc, wick_malliavin
from .errors import (BasisInsufficiencyError, ChaosCalcError, ConfigError, DomainError, InfeasibleError,
                     IntervalTooLongError, OrderOverflowError, TruncationError, UnsupportedError)
from .reports import CheckReport

__version__ = "0.1.0"

__all__ = [
    "bsvie", "chaos_core", "control_mp", "linear_bsde", "pathwise_mc", "wick_malliavin",
    "BasisInsufficiencyError", "ChaosCalcError", "ConfigError", "DomainError", "InfeasibleError",
    "IntervalTooLongError", "OrderOverflowError", "TruncationError", "UnsupportedError", "CheckReport",
    "__version__",
]
