"""Wick algebra, Hida-Malliavin calculus and checkable identities."""
from .algebra import (DEFAULT_ORDER_CAP, wick_product, wick_power, wick_exp, wick_exp_tail_bound,
                      ordinary_product, kernel_product)
from .calculus import (malliavin_derivative, malliavin_derivative_process, malliavin_kernel,
                       skorohod_integral, conditional_expectation, AdaptedIntegrand, clark_ocone)
from .identities import (basis_view, derivative_process, fundamental_theorem_check, duality_check,
                         integration_by_parts_check, chain_rule_check, clark_ocone_residual, product_process,
                         polynomial_of_kernels)

__all__ = [
    "DEFAULT_ORDER_CAP", "wick_product", "wick_power", "wick_exp", "wick_exp_tail_bound",
    "ordinary_product", "kernel_product", "malliavin_derivative", "malliavin_derivative_process",
    "malliavin_kernel", "skorohod_integral", "conditional_expectation", "AdaptedIntegrand",
    "clark_ocone", "basis_view", "derivative_process", "fundamental_theorem_check", "duality_check",
    "integration_by_parts_check", "chain_rule_check", "clark_ocone_residual", "polynomial_of_kernels", "product_process",
]
