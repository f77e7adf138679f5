import math

import numpy as np
import pytest
from scipy.integrate import quad

from chaoscalc.chaos_core import (
    ChaosProcess, HermiteBasis, HermiteChaos, KernelChaos, MultiIndex, TimeGrid, Truncation,
    brownian_chaos, dual_action, expectation, gaussian_psd_check, hermite_function, hermite_poly,
    hermite_to_kernel, hida_norm, index_from_tuple, iter_indices, kernel_to_hermite, l2_norm,
    mi_factorial, newton_cotes_weights, summability_probe, wiener_integral_chaos,
)


class TestMultiIndex:
    def test_trailing_zeros_trimmed(self):
        assert MultiIndex((1, 0, 2, 0, 0)) == MultiIndex((1, 0, 2))
        assert MultiIndex((0, 0)) == MultiIndex()

    def test_order_and_units(self):
        a = MultiIndex((1, 0, 2))
        assert a.order == 3
        assert a.add_unit(2) == MultiIndex((1, 1, 2))
        assert a.sub_unit(3) == MultiIndex((1, 0, 1))
        assert MultiIndex.unit(4) == MultiIndex((0, 0, 0, 1))

    def test_factorial(self):
        assert mi_factorial((2, 3)) == 2 * 6
        assert mi_factorial(()) == 1

    def test_index_from_positions(self):
        assert index_from_tuple([1, 1, 3]) == MultiIndex((2, 0, 1))

    def test_iter_indices_count(self):
        # number of α with length ≤ K, |α| ≤ N is C(K+N, N)
        for K, N in [(3, 2), (5, 3), (4, 4)]:
            assert sum(1 for _ in iter_indices(K, N)) == math.comb(K + N, N)

    def test_truncation_validation(self):
        with pytest.raises(ValueError):
            Truncation(0, 2)
        with pytest.raises(ValueError):
            Truncation(3, -1)
        t = Truncation(2, 2)
        assert t.admits(MultiIndex((1, 1)))
        assert not t.admits(MultiIndex((0, 0, 1)))
        assert not t.admits(MultiIndex((3,)))


class TestTimeGrid:
    def test_weights_integrate_quintics_exactly(self):
        for M in [4, 8, 13, 30, 63]:
            g = TimeGrid(1.7, M)
            for p in range(6):
                np.testing.assert_allclose(g.quad_weights @ g.points ** p, 1.7 ** (p + 1) / (p + 1),
                                           rtol=1e-12)

    def test_weights_positive(self):
        for M in range(1, 20):
            assert np.all(newton_cotes_weights(M, 0.1) > 0)

    def test_index_and_refine(self):
        g = TimeGrid(1.0, 8)
        assert g.index(0.25) == 2
        assert g.refine(2).M == 16
        with pytest.raises(ValueError):
            g.index(0.3)

    def test_cumulative_integral(self):
        g = TimeGrid(1.0, 16)
        np.testing.assert_allclose(g.cumulative_integral(np.cos), np.sin(g.points), atol=1e-12)


class TestHermite:
    def test_polynomials_low_order(self):
        x = np.linspace(-3, 3, 11)
        np.testing.assert_allclose(hermite_poly(2, x), x ** 2 - 1)
        np.testing.assert_allclose(hermite_poly(3, x), x ** 3 - 3 * x)
        np.testing.assert_allclose(hermite_poly(4, x), x ** 4 - 6 * x ** 2 + 3)

    def test_polynomial_orthogonality_under_gaussian(self):
        x, w = np.polynomial.hermite_e.hermegauss(30)
        w = w / w.sum()
        for m in range(6):
            for n in range(6):
                val = np.sum(w * hermite_poly(m, x) * hermite_poly(n, x))
                np.testing.assert_allclose(val, math.factorial(n) if m == n else 0.0, atol=1e-9)

    def test_functions_orthonormal(self):
        for j, k in [(1, 1), (3, 3), (2, 5), (10, 10), (4, 7)]:
            val, _ = quad(lambda s: hermite_function(j, s) * hermite_function(k, s), -np.inf, np.inf)
            np.testing.assert_allclose(val, 1.0 if j == k else 0.0, atol=1e-10)

    def test_first_function_closed_form(self):
        t = np.linspace(-2, 2, 9)
        np.testing.assert_allclose(hermite_function(1, t), np.pi ** -0.25 * np.exp(-t ** 2 / 2))

    def test_functions_bounded_at_high_index(self):
        t = np.linspace(-20, 20, 401)
        v = hermite_function(400, t)
        assert np.all(np.isfinite(v)) and np.max(np.abs(v)) <= np.pi ** -0.25 + 1e-12

    def test_one_based_index(self):
        with pytest.raises(ValueError):
            hermite_function(0, 0.0)

    def test_basis_orthonormality(self, basis):
        assert basis.orthonormality_error() < 1e-10

    def test_large_basis_stays_orthonormal(self):
        assert HermiteBasis(200, TimeGrid(1.0, 8)).orthonormality_error() < 1e-8

    def test_cumulative_integral_matches_quadrature(self, basis):
        for t in [0.3125, 1.0]:
            for k in [1, 4, 9]:
                ref, _ = quad(lambda s: hermite_function(k, s), 0.0, t)
                np.testing.assert_allclose(basis.E(t)[k - 1], ref, atol=1e-12)


class TestHermiteChaos:
    T = Truncation(3, 3)

    def test_truncation_enforced(self):
        with pytest.raises(ValueError):
            HermiteChaos(self.T, {MultiIndex((4,)): 1.0})
        with pytest.raises(ValueError):
            HermiteChaos(self.T, {MultiIndex((0, 0, 0, 1)): 1.0})

    def test_linear_structure(self):
        X = HermiteChaos(self.T, {(): 1.0, (1,): 2.0})
        Y = HermiteChaos(self.T, {(1,): -2.0, (0, 1): 0.5})
        Z = 2.0 * X + Y - X
        assert Z[MultiIndex()] == 1.0
        assert Z[MultiIndex((1,))] == 0.0
        assert Z[MultiIndex((0, 1))] == 0.5

    def test_json_roundtrip(self):
        X = HermiteChaos(self.T, {(): 0.1, (1, 2): -3.25, (0, 0, 1): 1e-7})
        Y = HermiteChaos.from_json(X.to_json())
        assert X.allclose(Y, atol=0.0)
        assert Y.truncation == self.T

    def test_expectation_and_norms(self):
        X = HermiteChaos(self.T, {(): 2.0, (1,): 3.0, (0, 2): 1.0})
        assert expectation(X) == 2.0
        # E[X²] = Σ α! c²
        np.testing.assert_allclose(l2_norm(X) ** 2, 4.0 + 9.0 + 2.0)
        np.testing.assert_allclose(dual_action(X, X), l2_norm(X) ** 2)
        # (S)_{-q} weights (2ℕ)^{-qα}: index (0,2) weighs (4)^{-2q}
        q = 1.0
        np.testing.assert_allclose(hida_norm(X, -q) ** 2, 4.0 + 9.0 / 2.0 + 2.0 / 16.0)

    def test_restrict_order(self):
        X = HermiteChaos(self.T, {(): 2.0, (1,): 3.0, (0, 2): 1.0})
        X1 = X.restrict_order(1)
        assert dict(X1.items()) == {MultiIndex((1,)): 3.0}
        assert (X.restrict_order(0) + X1 + X.restrict_order(2)).allclose(X, atol=0.0)


class TestSummability:
    def test_q_must_be_positive(self):
        with pytest.raises(ValueError):
            summability_probe(0.0, Truncation(3, 3))

    def test_matches_brute_force(self):
        for q in [0.5, 1.0, 2.0]:
            cut = Truncation(4, 3)
            ref = sum(np.prod([(2.0 * (j + 1)) ** (-q * a) for j, a in enumerate(al)])
                      for al in iter_indices(4, 3))
            np.testing.assert_allclose(summability_probe(q, cut), ref, rtol=1e-13)

    def test_convergent_for_q_above_one(self):
        # Σ_α (2ℕ)^{-qα} = Π_j 1/(1 − (2j)^{-q}) < ∞ for q > 1
        q, K = 2.0, 12
        limit = np.prod([1.0 / (1.0 - (2.0 * j) ** -q) for j in range(1, K + 1)])
        vals = [summability_probe(q, Truncation(K, N)) for N in (5, 10, 20, 40)]
        assert np.all(np.diff(vals) >= 0)
        np.testing.assert_allclose(vals[-1], limit, rtol=1e-10)


class TestFirstOrder:
    def test_brownian_variance(self, basis):
        # Var B_K(t) = Σ E_k(t)² → t; the tail is small for interior-ish times
        for t in [0.25, 0.5, 1.0]:
            v = l2_norm(brownian_chaos(t, basis)) ** 2
            assert v <= t + 1e-12
            assert t - v < 0.15

    def test_wiener_integral_projection(self, basis):
        f = lambda s: np.cos(3 * s)
        X = wiener_integral_chaos(f, basis)
        for k in [1, 2, 7]:
            ref, _ = quad(lambda s: f(s) * hermite_function(k, s), 0.0, 1.0, limit=200)
            np.testing.assert_allclose(X[MultiIndex.unit(k)], ref, atol=1e-10)

    def test_wiener_integral_coefficients(self, basis):
        X = wiener_integral_chaos([0.5, -1.0], basis, coefficients=True)
        assert X[MultiIndex.unit(1)] == 0.5 and X[MultiIndex.unit(2)] == -1.0


class TestKernelConversion:
    def test_indicator_power_second_order(self, basis):
        # I_2(χ_[0,t]^{⊗2}) = B(t)² − t has H-coefficients E_j E_k · (2 if j≠k else 1)
        t = 0.5
        H = kernel_to_hermite(KernelChaos.indicator_power(basis, 2, 0.0, t), basis)
        E = basis.E(t)
        np.testing.assert_allclose(H[MultiIndex((2,))], E[0] ** 2, atol=1e-12)
        np.testing.assert_allclose(H[MultiIndex((1, 1))], 2 * E[0] * E[1], atol=1e-12)
        np.testing.assert_allclose(H[MultiIndex((0, 0, 1, 0, 1))], 2 * E[2] * E[4], atol=1e-12)

    def test_roundtrip(self, basis, rng):
        T = Truncation(5, 3)
        X = HermiteChaos(T, {a: rng.normal() for a in iter_indices(5, 3)})
        back = kernel_to_hermite(hermite_to_kernel(X, basis, max_order=3), basis, truncation=T)
        assert X.max_abs_diff(back) < 1e-10

    def test_norm_isometry(self, basis):
        # ‖I_n(f)‖² = n! ‖f‖²; for χ_[0,t]^{⊗n}, n! tⁿ
        for n, t in [(1, 0.375), (2, 0.6875), (3, 1.0)]:
            F = KernelChaos.indicator_power(basis, n, 0.0, t)
            np.testing.assert_allclose(F.l2_norm() ** 2, math.factorial(n) * t ** n, rtol=1e-12)

    def test_restrict_is_conditioning(self, basis):
        F = KernelChaos.indicator_power(basis, 2, 0.0, 1.0).restrict(0.0, 0.5)
        np.testing.assert_allclose(F.l2_norm() ** 2, 2 * 0.25, rtol=1e-12)


class TestChaosProcess:
    def test_at_time_matches_function(self, basis):
        trunc = Truncation(basis.K, 1)
        P = ChaosProcess.from_function(basis.grid, lambda t: brownian_chaos(t, basis, trunc), trunc)
        t = basis.grid.points[10]
        assert P.at_time(t).max_abs_diff(brownian_chaos(t, basis, trunc)) < 1e-14

    def test_deterministic(self, grid):
        P = ChaosProcess.deterministic(grid, np.sin(grid.points), Truncation(2, 1))
        np.testing.assert_allclose(expectation(P.at(5)), np.sin(grid.points[5]))


class TestCharacteristicFunctional:
    def test_psd(self, grid, rng):
        phis = rng.normal(size=(40, grid.M + 1))
        assert gaussian_psd_check(phis, grid) >= -1e-10

    def test_identical_functions_give_singular_matrix(self, grid):
        phi = np.sin(grid.points)
        np.testing.assert_allclose(gaussian_psd_check([phi, phi], grid), 0.0, atol=1e-12)


class TestWorkedExamples:
    def test_dual_action_of_basis_element_is_factorial(self):
        H = HermiteChaos.basis_element((0, 2, 1))
        assert dual_action(H, H) == pytest.approx(2.0)

    def test_dual_action_with_one_is_expectation(self, rng):
        t = Truncation(6, 3)
        F = HermiteChaos(t, {a: rng.normal() for a in iter_indices(6, 3)})
        assert dual_action(F, HermiteChaos.constant(1.0, t)) == pytest.approx(expectation(F))

    @pytest.mark.parametrize("j", [1, 3, 7])
    def test_hida_norm_of_unit_index(self, j):
        H = HermiteChaos.basis_element(MultiIndex.unit(j))
        assert hida_norm(H, 1) == pytest.approx(math.sqrt(2 * j))

    def test_third_power_kernel_is_wick_cube(self, basis):
        from chaoscalc.wick_malliavin import wick_power
        F = kernel_to_hermite(KernelChaos.indicator_power(basis, 3), basis)
        assert F.max_abs_diff(wick_power(brownian_chaos(1.0, basis), 3)) < 1e-12

    def test_brownian_at_zero_vanishes(self, basis):
        assert l2_norm(brownian_chaos(0.0, basis)) == pytest.approx(0.0, abs=1e-14)

    def test_white_noise_is_time_derivative_of_brownian(self, basis, grid):
        from chaoscalc.chaos_core import singular_white_noise
        t, h = 0.5, grid.dt
        lo, hi = brownian_chaos(t - h, basis), brownian_chaos(t + h, basis)
        W = singular_white_noise(t, basis)
        fd = np.array([(hi[a] - lo[a]) / (2 * h) for a in (MultiIndex.unit(k) for k in range(1, 21))])
        exact = np.array([W[MultiIndex.unit(k)] for k in range(1, 21)])
        np.testing.assert_allclose(fd, exact, atol=2e-3)

    def test_white_noise_negative_norm_finite(self, basis):
        from chaoscalc.chaos_core import singular_white_noise
        W = singular_white_noise(0.4, basis)
        assert np.isfinite(hida_norm(W, -2))
        assert hida_norm(W, -2) < l2_norm(W)
