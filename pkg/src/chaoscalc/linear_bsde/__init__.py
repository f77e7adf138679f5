"""Closed-form linear and mean-field BSDEs with jumps."""
from .spec import GammaDrift, LinearBSDESpec, TerminalDescriptor
from .closed_form import (GammaPaths, LinearBSDESolution, RepresentationReport, closed_form_Y, gamma_path,
                          gamma_paths, linear_bsde_solve, regression_crosscheck, representation_check)
from .meanfield import (NORM_TARGET, MeanFieldOperator, MeanFieldSolution, MeanFieldVector, dense_solve,
                        meanfield_bsde_solve, meanfield_F_vector, meanfield_operator, neumann_solve)

__all__ = [
    "GammaDrift", "LinearBSDESpec", "TerminalDescriptor", "GammaPaths", "LinearBSDESolution",
    "RepresentationReport", "closed_form_Y", "gamma_path", "gamma_paths", "linear_bsde_solve",
    "regression_crosscheck", "representation_check", "NORM_TARGET", "MeanFieldOperator",
    "MeanFieldSolution", "MeanFieldVector", "dense_solve", "meanfield_bsde_solve", "meanfield_F_vector",
    "meanfield_operator", "neumann_solve",
]
