"""Linear backward stochastic Volterra integral equations via resolvent kernels."""
from .resolvent import (TriangleKernel, VolterraKernel, RowEngine, factorial_bound, printed_factorial_bound,
                        resolvent_phi_n, resolvent_psi, terms_for_tol, volterra_values, psi_rows)
from .solver import (BSVIECoefficients, BSVIESolution, BSVIESpec, FreeTerm, GirsanovChange, ResidualReport,
                     ZKSolution, bsvie_solve_Y, bsvie_solve_ZK, deterministic_residual, diagonal_check,
                     girsanov_build, kernel_from_config, pathwise_residual, smoothness_report)

__all__ = [
    "TriangleKernel", "VolterraKernel", "RowEngine", "factorial_bound", "printed_factorial_bound",
    "resolvent_phi_n", "resolvent_psi", "terms_for_tol", "volterra_values", "psi_rows",
    "BSVIECoefficients", "BSVIESolution", "BSVIESpec", "FreeTerm", "GirsanovChange", "ResidualReport",
    "ZKSolution", "bsvie_solve_Y", "bsvie_solve_ZK", "deterministic_residual", "diagonal_check",
    "girsanov_build", "kernel_from_config", "pathwise_residual", "smoothness_report",
]
