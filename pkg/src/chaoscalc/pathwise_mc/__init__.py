"""Monte Carlo bridge: ensembles, pathwise evaluation and regression."""
from .ensemble import LevyModel, MCEnsemble, MCEstimate, build_ensemble, mc_mean, BLOCK_SIZE
from .evaluation import (evaluate, evaluate_kernel, evaluate_process, brownian_path, compensated_jump_integral,
                         compensated_jump_process, jump_exponential_checks)
from .regression import RegressionResult, regress_conditional, state_features, polynomial_design

__all__ = [
    "LevyModel", "MCEnsemble", "MCEstimate", "build_ensemble", "mc_mean", "BLOCK_SIZE",
    "evaluate", "evaluate_kernel", "evaluate_process", "brownian_path", "compensated_jump_integral",
    "compensated_jump_process", "jump_exponential_checks", "RegressionResult",
    "regress_conditional", "state_features", "polynomial_design",
]
