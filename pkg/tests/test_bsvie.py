import json
import math
from pathlib import Path

import numpy as np
import pytest

from chaoscalc.bsvie import (
    BSVIESpec, FreeTerm, VolterraKernel, bsvie_solve_Y, bsvie_solve_ZK, deterministic_residual,
    diagonal_check, factorial_bound, girsanov_build, kernel_from_config, pathwise_residual,
    printed_factorial_bound, resolvent_phi_n, resolvent_psi, smoothness_report, terms_for_tol,
)
from chaoscalc.chaos_core import TimeGrid
from chaoscalc.errors import ConfigError, DomainError, UnsupportedError
from chaoscalc.pathwise_mc import LevyModel, build_ensemble, mc_mean

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
LEVY = LevyModel(((0.5, 1.0), (-0.3, 2.0)))


@pytest.fixture(scope="module")
def grid():
    return TimeGrid(1.0, 32)


@pytest.fixture(scope="module")
def ens(grid):
    return build_ensemble(31, 20000, 8, grid, levy=LEVY)


@pytest.fixture(scope="module")
def spec(grid):
    return BSVIESpec(grid, VolterraKernel.exp_decay(1.0, 1.0, 0.7), xi_drift=0.4, beta=0.3,
                     F=FreeTerm(1.0, 0.5, 0.8, "T"), levy=LEVY)


class TestFactorialBounds:
    def test_values(self):
        np.testing.assert_allclose(printed_factorial_bound(2.0, 1.5, 3), 27.0 / 6.0)
        np.testing.assert_allclose(factorial_bound(2.0, 1.5, 3), 8.0 * 2.25 / 2.0)
        assert factorial_bound(0.0, 1.0, 4) == 0.0

    def test_printed_bound_fails_for_unit_kernel(self):
        # Φ ≡ 1 on [0, 1]: Φ⁽²⁾(0, 1) = 1 > 1²/2!
        tk = resolvent_phi_n(VolterraKernel.constant(1.0, 1.0), 2, TimeGrid(1.0, 16))
        np.testing.assert_allclose(tk.max_abs(), 1.0, rtol=1e-12)
        assert tk.info["printed_bound_violated"]
        assert not tk.info["valid_bound_violated"]

    def test_terms_for_tol_is_monotone(self):
        Ns = [terms_for_tol(1.3, 1.0, tol) for tol in (1e-4, 1e-8, 1e-12)]
        assert Ns == sorted(Ns) and Ns[0] >= 1
        assert terms_for_tol(0.0, 1.0, 1e-12) == 1


class TestResolvent:
    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_iterated_constant_kernel(self, n):
        # Φ ≡ c: Φ⁽ⁿ⁾(t, r) = cⁿ (r − t)^{n−1}/(n−1)!
        c, g = 1.3, TimeGrid(1.0, 16)
        tk = resolvent_phi_n(VolterraKernel.constant(c, 1.0), n, g)
        err = tk.max_abs_diff(lambda t, r: c ** n * (r - t) ** (n - 1) / math.factorial(n - 1))
        assert err < 1e-10

    def test_psi_constant_kernel(self):
        c, g = 1.3, TimeGrid(1.0, 16)
        psi = resolvent_psi(VolterraKernel.constant(c, 1.0), g)
        assert psi.max_abs_diff(lambda t, r: c * np.exp(c * (r - t))) < 1e-9
        assert psi.info["identity_residual"] < 1e-9

    def test_psi_exp_decay(self):
        # ρ(x) = s e^{−a x}: Ψ(x) = s e^{(s − a) x}
        a, s, g = 1.0, 0.7, TimeGrid(1.0, 16)
        psi = resolvent_psi(VolterraKernel.exp_decay(1.0, a, s), g)
        assert psi.max_abs_diff(lambda t, r: s * np.exp((s - a) * (r - t))) < 1e-10

    def test_tabulated_kernel(self, grid):
        tab = np.full((grid.M + 1, grid.M + 1), 0.5)
        k = VolterraKernel.tabulated(grid, tab)
        np.testing.assert_allclose(k(0.1, 0.7), 0.5)
        with pytest.raises(ValueError):
            VolterraKernel.tabulated(grid, np.zeros((3, 3)))

    def test_n_must_be_positive(self, grid):
        with pytest.raises(ValueError):
            resolvent_phi_n(VolterraKernel.constant(1.0, 1.0), 0, grid)


class TestSpec:
    def test_from_config(self):
        spec = BSVIESpec.from_config(json.loads((CONFIGS / "bsvie.json").read_text()))
        assert spec.phi.name == "exp-decay" and spec.F.pin == "T"

    def test_unknown_preset(self, grid):
        with pytest.raises(ConfigError):
            kernel_from_config({"preset": "gaussian"}, grid)
        with pytest.raises(ConfigError):
            kernel_from_config({"rate": 1.0}, grid)

    def test_beta_domain(self, grid):
        with pytest.raises(DomainError):
            BSVIESpec(grid, VolterraKernel.zero(1.0), beta=-1.0, levy=LEVY)

    def test_jump_free_term_needs_measure(self, grid):
        with pytest.raises(ValueError):
            BSVIESpec(grid, VolterraKernel.zero(1.0), F=FreeTerm(c=1.0))

    def test_pin_validation(self):
        with pytest.raises(ValueError):
            FreeTerm(pin="s")

    def test_horizon_mismatch(self, grid):
        with pytest.raises(ValueError):
            BSVIESpec(grid, VolterraKernel.zero(2.0))

    def test_stochastic_coefficients_unsupported(self):
        d = json.loads((CONFIGS / "bsvie.json").read_text())
        d["xi_drift"] = {"gB": 1.0}
        with pytest.raises(UnsupportedError):
            BSVIESpec.from_config(d)


class TestGirsanov:
    def test_martingale_and_shift(self, spec, ens):
        G = girsanov_build(spec, ens)
        assert mc_mean(G.MT).within(1.0)
        assert G.expect_Q(G.BQ[:, -1]).within(0.0)
        assert G.expect_Q(G.JQ[:, -1]).within(0.0)
        np.testing.assert_allclose(G.ratio(spec.grid.M), 1.0)


class TestSolutions:
    def test_deterministic_volterra(self, grid):
        # y(t) = a + ∫ₜᵀ c y(r) dr ⇒ y(t) = a e^{c(T − t)}
        sp = BSVIESpec(grid, VolterraKernel.constant(1.3, 1.0), F=FreeTerm(2.0))
        sol = bsvie_solve_Y(sp)
        np.testing.assert_allclose(sol.Ybar, 2.0 * np.exp(1.3 * (1.0 - grid.points)), rtol=1e-10)
        assert deterministic_residual(sp).deviation < 1e-8

    def test_drift_only_oracle(self, grid, ens):
        # Φ = 0, F = b B(T): Y(t) = b (B(t) + x (T − t)) and Z(t, s) = b
        b, x = 0.5, 0.4
        sp = BSVIESpec(grid, VolterraKernel.zero(1.0), xi_drift=x, F=FreeTerm(0.0, b), levy=LEVY)
        sol = bsvie_solve_Y(sp, ens)
        B = ens.brownian
        np.testing.assert_allclose(sol.Y, b * (B + x * (1.0 - grid.points)[None, :]), atol=1e-10)
        zk = bsvie_solve_ZK(sp)
        np.testing.assert_allclose(zk.Z(0.25, np.array([0.5, 0.75])), b, atol=1e-12)

    def test_deterministic_residual_rejects_random_F(self, spec):
        with pytest.raises(UnsupportedError):
            deterministic_residual(spec)

    def test_regression_agrees_with_closed_form(self, spec, ens):
        closed = bsvie_solve_Y(spec, ens)
        reg = bsvie_solve_Y(spec, ens, method="regression")
        i = spec.grid.index(0.5)
        rms = np.sqrt(np.mean((closed.Y[:, i] - reg.Y[:, i]) ** 2))
        assert rms < 0.05 * np.std(closed.Y[:, i])

    def test_regression_needs_ensemble(self, spec):
        with pytest.raises(ValueError):
            bsvie_solve_Y(spec, method="regression")

    def test_pathwise_residual(self, spec, ens):
        rep = pathwise_residual(spec, ens, times=[0.0, 0.25, 0.5, 0.75])
        assert rep.passed, rep.to_dict()

    def test_residual_shrinks_with_grid(self):
        l2 = []
        for M in (16, 64):
            g = TimeGrid(1.0, M)
            sp = BSVIESpec(g, VolterraKernel.exp_decay(1.0, 1.0, 0.7), xi_drift=0.4, F=FreeTerm(1.0, 0.5))
            e = build_ensemble(3, 4000, 8, g)
            l2.append(pathwise_residual(sp, e, times=[0.0, 0.5]).l2)
        assert l2[1] < 0.6 * l2[0]

    def test_diagonal_identity(self, spec):
        assert diagonal_check(spec).passed

    def test_diagonal_gap_for_pinned_free_term(self, grid):
        sp = BSVIESpec(grid, VolterraKernel.exp_decay(1.0, 1.0, 0.7), F=FreeTerm(1.0, 0.5, pin="t"))
        rep = diagonal_check(sp)
        assert not rep.passed
        np.testing.assert_allclose(np.abs(np.asarray(rep.lhs) - np.asarray(rep.rhs)), 0.5, atol=1e-8)

    def test_smoothness(self, spec):
        rep = smoothness_report(spec)
        assert rep["finite"] and rep["stable"]

    def test_table_shapes(self, spec, ens):
        sol = bsvie_solve_Y(spec, ens)
        assert len(sol.table()) == spec.grid.M + 1
        zk = bsvie_solve_ZK(spec)
        n = spec.grid.M + 1
        assert len(zk.table()) == n * (n + 1) // 2
        json.dumps(sol.summary())


class TestWorkedExamples:
    def test_zero_kernel_has_zero_resolvent(self, grid):
        k = VolterraKernel.zero(1.0)
        assert resolvent_phi_n(k, 3, grid).max_abs() == 0.0
        assert resolvent_psi(k, grid).max_abs() == 0.0

    def test_balanced_exp_kernel(self, grid):
        # ρ(x) = e^{−x}: Ψ ≡ 1, so F = 1 gives Y(t) = 1 + (T − t)
        sp = BSVIESpec(grid, VolterraKernel.exp_decay(1.0, 1.0, 1.0), F=FreeTerm(1.0))
        assert resolvent_psi(sp.phi, grid).max_abs_diff(lambda t, r: np.ones_like(r - t)) < 1e-8
        np.testing.assert_allclose(bsvie_solve_Y(sp).Ybar, 2.0 - grid.points, rtol=1e-8)

    def test_no_drift_means_no_change_of_measure(self, grid, ens):
        sp = BSVIESpec(grid, VolterraKernel.zero(1.0), F=FreeTerm(1.0, 0.5, 0.8), levy=LEVY)
        np.testing.assert_allclose(girsanov_build(sp, ens).MT, 1.0, rtol=1e-12)

    def test_deterministic_data_give_zero_integrands(self, grid):
        sp = BSVIESpec(grid, VolterraKernel.constant(0.7, 1.0), F=FreeTerm(2.0))
        zk = bsvie_solve_ZK(sp)
        np.testing.assert_allclose(zk.Z(0.25, np.array([0.5, 0.75, 1.0])), 0.0, atol=1e-14)

    def test_pinned_free_term_integrand_vanishes_after_t(self, grid):
        # F(t) = B(t) is known at time t, so nothing is left to represent on (t, T]
        sp = BSVIESpec(grid, VolterraKernel.zero(1.0), F=FreeTerm(0.0, 1.0, pin="t"))
        zk = bsvie_solve_ZK(sp)
        np.testing.assert_allclose(zk.Z(0.25, np.array([0.5, 0.75, 1.0])), 0.0, atol=1e-14)
