"""Chaos representations: multi-indices, Hermite basis, H_α expansions and kernels."""
from .grid import TimeGrid, newton_cotes_weights
from .mesh import KernelMesh
from .multiindex import (MultiIndex, Truncation, mi_factorial, log_mi_factorial, two_n_pow,
                         iter_indices, index_from_tuple)
from .hermite import HermiteBasis, hermite_poly, hermite_polys, hermite_function, hermite_functions
from .chaos import (HermiteChaos, ChaosProcess, expectation, hida_norm, l2_norm, dual_action,
                    summability_probe, wiener_integral_chaos, brownian_chaos, singular_white_noise,
                    gaussian_psd_check)
from .kernels import KernelChaos, kernel_to_hermite, hermite_to_kernel, DEFAULT_KERNEL_ORDER

__all__ = [
    "TimeGrid", "newton_cotes_weights", "KernelMesh", "MultiIndex", "Truncation", "mi_factorial",
    "log_mi_factorial", "two_n_pow", "iter_indices", "index_from_tuple", "HermiteBasis",
    "hermite_poly", "hermite_polys", "hermite_function", "hermite_functions", "HermiteChaos",
    "ChaosProcess", "expectation", "hida_norm", "l2_norm", "dual_action", "summability_probe",
    "wiener_integral_chaos", "brownian_chaos", "singular_white_noise", "gaussian_psd_check",
    "KernelChaos", "kernel_to_hermite", "hermite_to_kernel", "DEFAULT_KERNEL_ORDER",
]
