import math

import numpy as np
import pytest

from chaoscalc.chaos_core import (
    ChaosProcess, HermiteChaos, KernelChaos, MultiIndex, Truncation, brownian_chaos, expectation,
    hermite_function, iter_indices, kernel_to_hermite, l2_norm, wiener_integral_chaos,
)
from chaoscalc.errors import TruncationError
from chaoscalc.pathwise_mc import build_ensemble
from chaoscalc.wick_malliavin import (
    AdaptedIntegrand, chain_rule_check, clark_ocone, clark_ocone_residual, conditional_expectation,
    duality_check, fundamental_theorem_check, integration_by_parts_check, kernel_product,
    malliavin_derivative, malliavin_kernel, ordinary_product, skorohod_integral, wick_exp,
    wick_exp_tail_bound, wick_power, wick_product,
)


def _random(rng, K, N, n=8):
    idx = list(iter_indices(K, N))
    pick = rng.choice(len(idx), size=min(n, len(idx)), replace=False)
    return HermiteChaos(Truncation(K, N), {idx[i]: rng.normal() for i in pick})


class TestWickAlgebra:
    def test_basis_elements_add_indices(self):
        T = Truncation(3, 2)
        a, b = MultiIndex((1, 0, 1)), MultiIndex((0, 2))
        P = wick_product(HermiteChaos.basis_element(a, T), HermiteChaos.basis_element(b, T), cap=None)
        assert dict(P.items()) == {MultiIndex((1, 2, 1)): 1.0}

    def test_commutative_associative_distributive(self, rng):
        X, Y, Z = (_random(rng, 4, 2) for _ in range(3))
        assert wick_product(X, Y, cap=None).max_abs_diff(wick_product(Y, X, cap=None)) < 1e-13
        lhs = wick_product(wick_product(X, Y, cap=None), Z, cap=None)
        rhs = wick_product(X, wick_product(Y, Z, cap=None), cap=None)
        assert lhs.max_abs_diff(rhs) < 1e-12
        d1 = wick_product(X, Y + Z, cap=None)
        d2 = wick_product(X, Y, cap=None) + wick_product(X, Z, cap=None)
        assert d1.max_abs_diff(d2) < 1e-12

    def test_first_order_rule(self, basis):
        # w_f ⋄ w_g = w_f · w_g − (f, g)
        f = wiener_integral_chaos(lambda s: np.sin(s), basis)
        g = wiener_integral_chaos(lambda s: 1.0 + s, basis)
        fg = sum(f[MultiIndex.unit(k)] * g[MultiIndex.unit(k)] for k in range(1, basis.K + 1))
        diff = ordinary_product(f, g) - wick_product(f, g)
        np.testing.assert_allclose(expectation(diff), fg, atol=1e-13)
        assert diff.max_abs_diff(HermiteChaos.constant(fg, diff.truncation)) < 1e-13

    def test_expectation_is_multiplicative(self, rng):
        X, Y = _random(rng, 3, 2), _random(rng, 3, 2)
        np.testing.assert_allclose(expectation(wick_product(X, Y)), expectation(X) * expectation(Y))

    def test_strict_cap_raises_and_lenient_clips(self):
        X = HermiteChaos(Truncation(2, 3), {(3,): 1.0})
        with pytest.raises(TruncationError):
            wick_product(X, X, cap=4)
        Y = wick_product(X, X, cap=4, strict=False)
        assert len(Y) == 0
        assert Y.clipped_mass > 0

    def test_wick_square_of_brownian(self, basis):
        # B ⋄ B = B² − Var B_K
        B = brownian_chaos(0.5, basis)
        d = ordinary_product(B, B) - wick_power(B, 2)
        np.testing.assert_allclose(expectation(d), l2_norm(B) ** 2, atol=1e-14)
        assert (d - expectation(d)).max_abs_diff(HermiteChaos.zero(d.truncation)) < 1e-14

    def test_wick_exp_of_wiener_integral(self, basis):
        # exp⋄(w_f) = Σ_α f^α / α! H_α
        c = np.array([0.3, -0.2, 0.1])
        X = wiener_integral_chaos(c, basis, coefficients=True, truncation=Truncation(3, 1))
        E = wick_exp(X, terms=14)
        for a in iter_indices(3, 3):
            ref = np.prod([c[k] ** n / math.factorial(n) for k, n in enumerate(a)])
            np.testing.assert_allclose(E[a], ref, atol=1e-15)
        np.testing.assert_allclose(expectation(E), 1.0)

    def test_wick_exp_constant_shift(self):
        T = Truncation(2, 1)
        X = HermiteChaos(T, {(): 0.7, (1,): 0.2})
        E0 = wick_exp(X - 0.7, terms=10)
        E = wick_exp(X, terms=10)
        assert E.max_abs_diff(math.exp(0.7) * E0) < 1e-13

    def test_wick_exp_tail_guard(self):
        X = HermiteChaos(Truncation(1, 1), {(1,): 3.0})
        bound = wick_exp_tail_bound(X, 4)
        np.testing.assert_allclose(bound, 3.0 ** 5 / 120)
        with pytest.raises(TruncationError):
            wick_exp(X, terms=4, tail_tol=1e-3)

    def test_negative_power_rejected(self):
        with pytest.raises(ValueError):
            wick_power(HermiteChaos.constant(1.0, Truncation(1, 1)), -1)


class TestOrdinaryProduct:
    def test_hermite_linearisation(self):
        T = Truncation(1, 4)
        h1 = HermiteChaos.basis_element((1,), T)
        h2 = HermiteChaos.basis_element((2,), T)
        # h1² = h2 + 1 and h1 h2 = h3 + 2 h1
        assert dict(ordinary_product(h1, h1).items()) == {MultiIndex(): 1.0, MultiIndex((2,)): 1.0}
        assert dict(ordinary_product(h1, h2).items()) == {MultiIndex((1,)): 2.0, MultiIndex((3,)): 1.0}

    def test_second_moment(self, rng):
        X = _random(rng, 3, 3)
        np.testing.assert_allclose(expectation(ordinary_product(X, X)), l2_norm(X) ** 2, rtol=1e-12)


class TestDerivativeAndIntegral:
    def test_derivative_of_basis_element(self, basis):
        t = 0.3125
        T = Truncation(basis.K, 3)
        F = HermiteChaos.basis_element((2, 1), T)
        D = malliavin_derivative(F, t, basis)
        e = basis.e(t)
        np.testing.assert_allclose(D[MultiIndex((1, 1))], 2 * e[0])
        np.testing.assert_allclose(D[MultiIndex((2,))], e[1])

    def test_derivative_of_brownian_is_indicator_projection(self, basis):
        s, t = 0.75, 0.25
        D = malliavin_derivative(brownian_chaos(s, basis), t, basis)
        np.testing.assert_allclose(expectation(D), basis.E(s) @ basis.e(t), atol=1e-14)

    def test_derivative_of_constant_is_zero(self, basis):
        D = malliavin_derivative(HermiteChaos.constant(2.0, Truncation(basis.K, 0)), 0.5, basis)
        assert len(D) == 0

    def test_skorohod_of_deterministic_is_wiener_integral(self, basis):
        grid = basis.grid
        phi = ChaosProcess.deterministic(grid, np.cos(grid.points), Truncation(basis.K, 0))
        ref = wiener_integral_chaos(np.cos(grid.points), basis)
        assert skorohod_integral(phi, basis).max_abs_diff(ref) < 1e-12

    def test_skorohod_of_brownian(self, basis):
        # ∫ B ⋄ dB = ½ B(T)^{⋄2}
        grid = basis.grid
        tr = Truncation(basis.K, 1)
        Y = ChaosProcess.from_function(grid, lambda t: brownian_chaos(t, basis, tr), tr)
        lhs = skorohod_integral(Y, basis)
        rhs = 0.5 * wick_power(brownian_chaos(1.0, basis), 2)
        assert lhs.max_abs_diff(rhs) < 1e-9

    def test_skorohod_has_mean_zero(self, basis, rng):
        grid = basis.grid
        tr = Truncation(basis.K, 2)
        X = _random(rng, basis.K, 2)
        Y = ChaosProcess.from_function(grid, lambda t: float(np.cos(t)) * X, tr)
        assert abs(expectation(skorohod_integral(Y, basis))) == 0.0

    @pytest.mark.parametrize("t", [0.25, 0.5, 0.75])
    def test_fundamental_theorem(self, basis, t):
        grid = basis.grid
        tr = Truncation(basis.K, 2)
        phi = ChaosProcess.from_function(
            grid, lambda s: wick_power(brownian_chaos(s, basis, Truncation(basis.K, 1)), 2), tr)
        rep = fundamental_theorem_check(phi, t, basis, tol=1e-10)
        assert rep.passed, rep.details


class TestKernelCalculus:
    def test_kernel_derivative_of_square(self, basis):
        # D_t I_2(χ²) = 2 I_1(χ) on [0, s] for t < s, zero afterwards
        s = 0.75
        F = KernelChaos.indicator_power(basis, 2, 0.0, s)
        D = malliavin_kernel(F, 0.25)
        np.testing.assert_allclose(D.l2_norm() ** 2, 4 * s, rtol=1e-12)
        assert malliavin_kernel(F, 0.875).l2_norm() == 0.0

    def test_kernel_product_itô(self, basis):
        # I_1(χ)·I_1(χ) = I_2(χ²) + ‖χ‖²
        s = 0.5
        B = KernelChaos.indicator_power(basis, 1, 0.0, s)
        P = kernel_product(B, B)
        np.testing.assert_allclose(P.expectation(), s, rtol=1e-12)
        np.testing.assert_allclose(P.l2_norm() ** 2, s ** 2 + 2 * s ** 2, rtol=1e-12)

    def test_conditional_expectation(self, basis):
        F = KernelChaos.indicator_power(basis, 2, 0.0, 1.0)
        C = conditional_expectation(F, 0.5)
        np.testing.assert_allclose(C.l2_norm() ** 2, 2 * 0.25, rtol=1e-12)
        np.testing.assert_allclose(conditional_expectation(F, 1.0).l2_norm(), F.l2_norm())

    def test_conditional_expectation_needs_basis_for_hermite(self, basis):
        with pytest.raises(ValueError):
            conditional_expectation(brownian_chaos(0.5, basis), 0.25)

    def test_clark_ocone_integrand_is_adapted(self, basis):
        F = KernelChaos.indicator_power(basis, 3, 0.0, 1.0)
        phi = clark_ocone(F)
        assert phi.support_violation() < 1e-14

    def test_clark_ocone_residual_small(self, basis):
        # B(T)² = T + ∫ 2B dB
        F = kernel_product(KernelChaos.indicator_power(basis, 1), KernelChaos.indicator_power(basis, 1))
        rep = clark_ocone_residual(F, basis, tol=1e-8)
        assert rep.passed, rep.details


@pytest.fixture(scope="module")
def ens(basis12):
    return build_ensemble(7, 4000, basis12.K, basis12.grid, basis=basis12)


class TestPathwiseIdentities:
    def test_chain_rule(self, basis12, ens):
        F = KernelChaos.indicator_power(basis12, 1, 0.0, 0.75)
        G = KernelChaos.indicator_power(basis12, 2, 0.0, 0.5)
        rep = chain_rule_check([F, G], {(2, 0): 1.0, (1, 1): -0.5}, 0.25, ens)
        assert rep.passed, rep.details

    def test_chain_rule_order_guard(self, basis12, ens):
        G = KernelChaos.indicator_power(basis12, 3, 0.0, 0.5)
        with pytest.raises(TruncationError):
            chain_rule_check([G], {(3,): 1.0}, 0.25, ens)

    def test_duality(self, basis12, ens):
        F = kernel_product(KernelChaos.indicator_power(basis12, 1), KernelChaos.indicator_power(basis12, 1))
        grid = basis12.grid
        u = AdaptedIntegrand.from_function(
            grid, lambda t: KernelChaos.indicator_power(basis12, 1, 0.0, t) if t > 0 else KernelChaos.constant(basis12, 0.0))
        rep = duality_check(F, u, ens)
        assert rep.passed, rep.details

    def test_integration_by_parts_pathwise(self, basis12, ens):
        tr = Truncation(basis12.K, 1)
        F = brownian_chaos(1.0, basis12, tr)
        u = ChaosProcess.from_function(basis12.grid, lambda t: brownian_chaos(t, basis12, tr), tr)
        rep = integration_by_parts_check(F, u, ens, basis12)
        assert rep.details["max_pathwise_deviation"] < 1e-9


class TestWorkedExamples:
    def test_clark_ocone_of_brownian_endpoint_is_one(self, basis):
        phi = clark_ocone(KernelChaos.indicator_power(basis, 1))
        for i in (0, 20, 63):
            np.testing.assert_allclose(phi.at(i).expectation(), 1.0, rtol=1e-12)
            np.testing.assert_allclose(phi.at(i).l2_norm(), 1.0, rtol=1e-12)

    def test_clark_ocone_of_square_is_twice_brownian(self, basis):
        # B(T)² = T + ∫ 2B(t) dB(t): φ(t) = 2B(t) has mean 0 and second moment 4t
        phi = clark_ocone(KernelChaos.indicator_power(basis, 2))
        grid = basis.grid
        for i in (16, 32, 48):
            assert phi.at(i).expectation() == 0.0
            np.testing.assert_allclose(phi.at(i).l2_norm() ** 2, 4 * grid.points[i], rtol=1e-12)

    def test_duality_with_unit_integrand(self, basis12, ens):
        # E[B(T) ∫ 1 dB] = T
        F = KernelChaos.indicator_power(basis12, 1)
        u = AdaptedIntegrand.from_function(basis12.grid, lambda t: KernelChaos.constant(basis12, 1.0))
        rep = duality_check(F, u, ens)
        assert rep.passed, rep.details
        np.testing.assert_allclose(rep.rhs, 1.0, atol=1e-12)

    def test_skorohod_pulls_out_wick_constants(self, basis):
        # δ(X ⋄ Y) = X ⋄ δ(Y) when X does not depend on t
        grid = basis.grid
        tr = Truncation(basis.K, 1)
        X = 2.0 + 0.5 * brownian_chaos(1.0, basis, tr)
        Y = ChaosProcess.from_function(grid, lambda t: brownian_chaos(t, basis, tr), tr)
        XY = ChaosProcess.from_function(grid, lambda t: wick_product(X, brownian_chaos(t, basis, tr)),
                                        Truncation(basis.K, 2))
        lhs = skorohod_integral(XY, basis)
        rhs = wick_product(X, skorohod_integral(Y, basis))
        assert lhs.max_abs_diff(rhs) < 1e-10

    def test_derivative_of_wick_exponential(self, basis):
        # D_t exp⋄(I(f)) = f(t) exp⋄(I(f)), order by order below the series cut
        c = np.zeros(basis.K)
        c[0], c[1] = 0.5, 0.3
        E = wick_exp(wiener_integral_chaos(c, basis, coefficients=True), terms=14)
        t = 0.25
        R = malliavin_derivative(E, t, basis) - E * float(c @ basis.e(t))
        assert max((abs(v) for a, v in R.items() if a.order < 13), default=0.0) < 1e-14

    def test_kernel_and_hermite_derivatives_agree(self, basis):
        # both give 2 B(1) times the K-term expansion of the indicator at t
        t = 0.25
        F = KernelChaos.indicator_power(basis, 2)
        via_kernel = kernel_to_hermite(malliavin_kernel(F, t), basis)
        via_hermite = malliavin_derivative(kernel_to_hermite(F, basis), t, basis)
        chi_t = float(basis.e(t) @ basis.E(1.0))
        assert via_hermite.max_abs_diff(chi_t * via_kernel) < 1e-12
