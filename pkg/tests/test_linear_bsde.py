import json
from pathlib import Path

import numpy as np
import pytest

from chaoscalc.chaos_core import TimeGrid
from chaoscalc.errors import ConfigError, IntervalTooLongError, UnsupportedError
from chaoscalc.linear_bsde import (
    LinearBSDESpec, TerminalDescriptor, closed_form_Y, dense_solve, gamma_path, gamma_paths,
    linear_bsde_solve, meanfield_bsde_solve, meanfield_F_vector, meanfield_operator, neumann_solve,
    regression_crosscheck, representation_check,
)
from chaoscalc.pathwise_mc import LevyModel, build_ensemble, mc_mean

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
LEVY = LevyModel(((0.5, 1.0), (-0.3, 0.8)))


@pytest.fixture(scope="module")
def grid():
    return TimeGrid(1.0, 32)


@pytest.fixture(scope="module")
def jens(grid):
    return build_ensemble(21, 20000, 8, grid, levy=LEVY)


@pytest.fixture(scope="module")
def spec(grid):
    return LinearBSDESpec(grid, alpha1=0.2, beta1=0.4, eta1=[0.3, -0.2], gamma=0.5,
                          xi=TerminalDescriptor(1.0, 0.5, 0.7), levy=LEVY)


@pytest.fixture(scope="module")
def mf_spec(grid):
    return LinearBSDESpec(grid, alpha1=0.2, alpha2=0.8, beta1=0.4, beta2=0.5, eta1=[0.3, -0.2],
                          eta2=[0.4, 0.2], gamma=0.5, xi=TerminalDescriptor(1.0, 0.5, 0.7), levy=LEVY)


class TestSpec:
    def test_from_config_file(self):
        spec = LinearBSDESpec.from_config(json.loads((CONFIGS / "bsde.json").read_text()))
        assert spec.grid.M == 64 and spec.levy.n_atoms == 2
        assert not spec.has_meanfield

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            LinearBSDESpec.from_config({"grid": {"T": 1.0, "M": 8}, "alpha3": 1.0})

    def test_meanfield_keys_can_be_forbidden(self):
        with pytest.raises(ConfigError):
            LinearBSDESpec.from_config({"grid": {"T": 1.0, "M": 8}, "alpha2": 1.0}, allow_meanfield=False)

    def test_terminal_must_be_affine(self):
        with pytest.raises(UnsupportedError):
            TerminalDescriptor.from_config({"c0": 1.0, "cB2": 1.0})
        with pytest.raises(UnsupportedError):
            TerminalDescriptor.from_config("B(T)**2")

    def test_meanfield_solver_required(self, grid):
        with pytest.raises(UnsupportedError):
            linear_bsde_solve(LinearBSDESpec(grid, alpha2=0.3))


class TestDeterministicOracle:
    def test_ode_solution(self, grid):
        # Y' = −aY − g, Y(T) = c: Y(t) = c e^{a(T−t)} + g (e^{a(T−t)} − 1)/a
        a, g, c = 0.7, 0.5, 1.3
        sol = linear_bsde_solve(LinearBSDESpec(grid, alpha1=a, gamma=g, xi=TerminalDescriptor(c)))
        e = np.exp(a * (1.0 - grid.points))
        np.testing.assert_allclose(sol.Ybar, c * e + g * (e - 1) / a, rtol=1e-12)
        np.testing.assert_allclose(sol.Z, 0.0)

    def test_time_dependent_rate(self, grid):
        # α(t) = t: g(t,T) = exp((T² − t²)/2)
        sol = linear_bsde_solve(LinearBSDESpec(grid, alpha1=lambda t: t, xi=TerminalDescriptor(2.0)))
        np.testing.assert_allclose(sol.Ybar, 2.0 * np.exp((1.0 - grid.points ** 2) / 2), rtol=1e-10)

    def test_brownian_terminal_with_drift(self, grid):
        # ξ = c_B B(T), β₁ = b: Y(t) = c_B (B(t) + b(T − t)), Z = c_B
        b, cB = 0.4, 1.5
        spec = LinearBSDESpec(grid, beta1=b, xi=TerminalDescriptor(0.0, cB))
        sol = linear_bsde_solve(spec)
        np.testing.assert_allclose(sol.Z, cB)
        Bt = np.array([-0.3, 0.0, 0.8])
        np.testing.assert_allclose(closed_form_Y(spec, 0.25, Bt, 0.0), cB * (Bt + b * 0.75), atol=1e-14)

    def test_jump_terminal(self, grid):
        # ξ = c_N J(T), η₁ = e per atom: Y(t) = c_N (J(t) + e Σζν (T − t)), K = c_N ζ
        e, cN = 0.3, 0.7
        spec = LinearBSDESpec(grid, eta1=e, xi=TerminalDescriptor(0.0, 0.0, cN), levy=LEVY)
        sol = linear_bsde_solve(spec)
        zn = np.sum(LEVY.zetas * LEVY.nus)
        np.testing.assert_allclose(sol.Ybar, cN * e * zn * (1.0 - grid.points), atol=1e-12)
        np.testing.assert_allclose(sol.K, np.outer(np.full(grid.M + 1, cN), LEVY.zetas), atol=1e-12)


class TestStochasticExponential:
    def test_mean_and_multiplicativity(self, grid, jens):
        spec = LinearBSDESpec(grid, alpha1=lambda t: 0.2 + 0.1 * t, beta1=0.4, eta1=[0.3, -0.2], levy=LEVY)
        G = gamma_path(spec, jens, 0.0, 1.0)
        assert mc_mean(G).within(np.exp(0.2 + 0.05))
        prod = gamma_path(spec, jens, 0.0, 0.5) * gamma_path(spec, jens, 0.5, 1.0)
        np.testing.assert_allclose(prod, G, rtol=1e-12)
        assert np.all(gamma_paths(spec, jens).between(3, 3) == 1.0)


class TestClosedFormSolution:

    def test_terminal_condition(self, spec, jens):
        sol = linear_bsde_solve(spec, jens)
        assert sol.terminal_error(jens) < 1e-12

    def test_mean_matches_closed_form(self, spec, jens):
        sol = linear_bsde_solve(spec, jens)
        # Y(0) is deterministic; later times fluctuate around the closed-form mean
        np.testing.assert_allclose(sol.Y[:, 0], sol.Ybar[0], rtol=1e-12)
        for i in (16, 24):
            assert mc_mean(sol.Y[:, i]).within(sol.Ybar[i])

    def test_regression_crosscheck(self, spec, jens):
        rep = regression_crosscheck(spec, jens, 0.5)
        assert rep["passed"], rep

    def test_representation(self, grid, jens):
        spec = LinearBSDESpec(grid, alpha1=0.1, beta1=0.5, eta1=[0.3, -0.2], gamma=0.5,
                              xi=TerminalDescriptor(1.0, 0.5, 0.7), levy=LEVY)
        rep = representation_check(spec, jens, 0.5)
        assert rep.passed, rep.to_dict()

    def test_table_and_summary(self, spec, jens):
        sol = linear_bsde_solve(spec, jens)
        rows = sol.table()
        assert len(rows) == spec.grid.M + 1 and {"t", "Ybar", "Z", "K_atom0", "K_atom1", "Y_mc_mean"} <= set(rows[0])
        json.dumps(sol.summary())


class TestMeanField:

    def test_reduces_to_linear(self, mf_spec):
        plain = mf_spec.without_meanfield()
        mf = meanfield_bsde_solve(plain)
        np.testing.assert_allclose(mf.V.V1, linear_bsde_solve(plain).Ybar, atol=1e-8)

    def test_deterministic_oracle(self, grid):
        # Ȳ' = −(a₁ + a₂)Ȳ − g with Ȳ(T) = c; trapezoid in s gives O(Δt²)
        a1, a2, g, c = 0.2, 0.8, 0.5, 1.0
        mf = meanfield_bsde_solve(LinearBSDESpec(grid, alpha1=a1, alpha2=a2, gamma=g, xi=TerminalDescriptor(c)))
        a = a1 + a2
        e = np.exp(a * (1.0 - grid.points))
        np.testing.assert_allclose(mf.V.V1, c * e + g * (e - 1) / a, rtol=2e-4)

    def test_neumann_matches_dense(self, mf_spec):
        F = meanfield_F_vector(mf_spec)
        V = neumann_solve(meanfield_operator(mf_spec, 0, mf_spec.grid.M), F)
        assert V.max_abs_diff(dense_solve(mf_spec, F)) < 1e-10

    def test_stitched_equals_dense_and_is_continuous(self):
        grid = TimeGrid(2.0, 64)
        spec = LinearBSDESpec(grid, alpha1=0.2, alpha2=1.5, beta2=0.5, gamma=0.5,
                              xi=TerminalDescriptor(1.0, 0.5))
        mf = meanfield_bsde_solve(spec)
        assert len(mf.intervals) > 1
        assert mf.continuity_jump <= 1e-8
        assert max(mf.norms) <= 0.9
        assert mf.V.max_abs_diff(dense_solve(spec, mf.F)) < 1e-8

    def test_forms_agree_without_z_coupling(self, grid):
        spec = LinearBSDESpec(grid, alpha1=0.2, alpha2=0.8, beta1=0.4, gamma=0.5,
                              xi=TerminalDescriptor(1.0, 0.5))
        a = meanfield_bsde_solve(spec, form="corrected")
        b = meanfield_bsde_solve(spec, form="literal")
        np.testing.assert_allclose(a.V.V1, b.V.V1, atol=1e-12)

    def test_neumann_rejects_large_norm(self):
        with pytest.raises(IntervalTooLongError):
            neumann_solve(np.eye(3) * 1.2, np.ones(3))

    def test_neumann_matrix_series(self):
        A = np.array([[0.2, 0.1], [0.0, 0.3]])
        f = np.array([1.0, 2.0])
        np.testing.assert_allclose(neumann_solve(A, f), np.linalg.solve(np.eye(2) - A, f), atol=1e-12)

    def test_paths_have_meanfield_mean(self, mf_spec, jens):
        mf = meanfield_bsde_solve(mf_spec, jens)
        np.testing.assert_allclose(mf.Y[:, 0], mf.V.V1[0], rtol=1e-12)
        assert mc_mean(mf.Y[:, 16]).within(mf.V.V1[16])


class TestWorkedExamples:
    def test_jump_factor_of_stochastic_exponential(self, grid, jens):
        # α = β = 0: Γ(0,T) = Π_jumps (1 + η_atom) · exp(−Σ_j η_j ν_j T)
        eta = np.array([0.3, -0.2])
        spec = LinearBSDESpec(grid, eta1=eta, levy=LEVY)
        prod = np.ones(jens.n_paths)
        np.multiply.at(prod, jens.jump_path, 1.0 + eta[jens.jump_atom])
        expected = prod * np.exp(-eta @ LEVY.nus)
        np.testing.assert_allclose(gamma_path(spec, jens, 0.0, 1.0), expected, rtol=1e-12)

    def test_brownian_terminal_has_unit_integrand(self, grid):
        sol = linear_bsde_solve(LinearBSDESpec(grid, xi=TerminalDescriptor(0.0, 1.0)))
        np.testing.assert_allclose(sol.Z, 1.0)
        np.testing.assert_allclose(sol.Ybar, 0.0, atol=1e-15)

    def test_constant_terminal_has_no_integrand_even_with_drift(self, grid):
        # ξ = 1 is deterministic, so Z ≡ 0 whatever β₁ is
        sol = linear_bsde_solve(LinearBSDESpec(grid, alpha1=0.3, beta1=0.4, xi=TerminalDescriptor(1.0)))
        np.testing.assert_allclose(sol.Z, 0.0)
        np.testing.assert_allclose(sol.Ybar, np.exp(0.3 * (1.0 - grid.points)), rtol=1e-12)

    def test_free_term_rows(self, grid):
        # corrected form: the β₁-rows vanish for deterministic ξ; the other form keeps β₁ e^{α₁(T−t)}
        spec = LinearBSDESpec(grid, alpha1=0.3, alpha2=0.5, beta1=0.4, xi=TerminalDescriptor(1.0))
        np.testing.assert_allclose(meanfield_F_vector(spec, form="corrected").V2, 0.0)
        np.testing.assert_allclose(meanfield_F_vector(spec, form="literal").V2,
                                   0.4 * np.exp(0.3 * (1.0 - grid.points)), rtol=1e-10)

    def test_operator_first_entry_and_scaling(self, grid):
        spec = LinearBSDESpec(grid, alpha2=0.5, xi=TerminalDescriptor(1.0))
        A = meanfield_operator(spec, 0, grid.M)
        np.testing.assert_allclose(A.matrix[0, 0], 0.5 * grid.dt / 2)
        half = meanfield_operator(spec, grid.M // 2, grid.M)
        assert half.hs_norm() < 0.6 * A.hs_norm()

    def test_operator_vanishes_without_meanfield_terms(self, grid):
        spec = LinearBSDESpec(grid, alpha1=0.3, beta1=0.4, xi=TerminalDescriptor(1.0, 0.5))
        np.testing.assert_array_equal(meanfield_operator(spec, 0, grid.M).matrix, 0.0)
