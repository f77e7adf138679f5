"""Stochastic maximum principle: Hamiltonians, an LQ jump-diffusion problem and
optimal consumption from a cash flow with memory."""
from .hamiltonian import ControlCoefficients, hamiltonian, hamiltonian_du
from .lq import (ControlIterate, ControlProblemLQ, PolicyCoefficients, StationarityReport, adjoint_regression,
                 analytic_value, lq_objective, lq_solve, perturbation_test, simulate_lq, stationarity_check,
                 unconstrained_benchmark)
from .cashflow import (CashflowResult, InfeasibleControlError, SVIEControlSpec, adjoint_spec, cashflow_solve,
                       degenerate_value, simulate_cashflow, svie_hamiltonian)

__all__ = [
    "ControlCoefficients", "hamiltonian", "hamiltonian_du",
    "ControlIterate", "ControlProblemLQ", "PolicyCoefficients", "StationarityReport", "adjoint_regression",
    "analytic_value", "lq_objective", "lq_solve", "perturbation_test", "simulate_lq", "stationarity_check",
    "unconstrained_benchmark",
    "CashflowResult", "InfeasibleControlError", "SVIEControlSpec", "adjoint_spec", "cashflow_solve",
    "degenerate_value", "simulate_cashflow", "svie_hamiltonian",
]
