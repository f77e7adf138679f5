import json
import math
from pathlib import Path

import numpy as np
import pytest

from chaoscalc.chaos_core import TimeGrid
from chaoscalc.control_mp import (
    ControlProblemLQ, InfeasibleControlError, SVIEControlSpec, adjoint_spec, analytic_value,
    cashflow_solve, degenerate_value, hamiltonian, hamiltonian_du, lq_objective, lq_solve,
    perturbation_test, simulate_cashflow, simulate_lq, stationarity_check, svie_hamiltonian,
    unconstrained_benchmark,
)
from chaoscalc.control_mp.lq import coefficients
from chaoscalc.errors import ConfigError, DomainError, InfeasibleError
from chaoscalc.linear_bsde import TerminalDescriptor
from chaoscalc.linear_bsde.spec import _jump_state
from chaoscalc.pathwise_mc import LevyModel, build_ensemble, mc_mean

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
LEVY = LevyModel(((0.5, 1.0),))


@pytest.fixture(scope="module")
def grid():
    return TimeGrid(1.0, 32)


@pytest.fixture(scope="module")
def ens(grid):
    return build_ensemble(41, 10000, 6, grid, levy=LEVY)


@pytest.fixture(scope="module")
def problem(grid):
    return ControlProblemLQ(-2.0, 0.3, grid, (0.2,), LEVY, constrained=True)


@pytest.fixture(scope="module")
def solved(problem, ens):
    return lq_solve(problem, ens)


class TestHamiltonian:
    def test_lq_hamiltonian(self, problem):
        # H = −½u² + up + σq + γ r ν
        c = coefficients(problem)
        H = hamiltonian(c, 0.5, 1.0, 0.7, 1.2, 0.4, [2.0])
        np.testing.assert_allclose(H, -0.5 * 0.49 + 0.7 * 1.2 + 0.3 * 0.4 + 0.2 * 2.0 * 1.0)

    def test_derivative_vanishes_at_maximiser(self, problem):
        c = coefficients(problem)
        p = np.array([-0.4, 0.0, 0.9])
        np.testing.assert_allclose(hamiltonian_du(c, 0.5, 1.0, p, p, 0.1), 0.0, atol=1e-8)
        np.testing.assert_allclose(hamiltonian_du(c, 0.5, 1.0, 0.0, p, 0.1), p, atol=1e-8)


class TestLQProblem:
    def test_from_config(self):
        pb = ControlProblemLQ.from_config(json.loads((CONFIGS / "lq.json").read_text()))
        assert pb.constrained and pb.gamma == (0.2,) and pb.grid.M == 64

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ControlProblemLQ.from_config({"x0": 1.0, "gamma": 0.2})
        with pytest.raises(ConfigError):
            ControlProblemLQ.from_config({"x0": 1.0, "constrained": "yes"})
        with pytest.raises(ConfigError):
            ControlProblemLQ.from_config({"x0": 1.0, "gamma": [0.1], "levy": {"atoms": []}})

    def test_analytic_value(self, problem):
        np.testing.assert_allclose(analytic_value(problem),
                                   -0.5 * (4.0 / 2.0 + (0.09 + 0.04) * math.log(2.0)))

    def test_zero_control_objective(self, problem, ens):
        # u ≡ 0: J = −½(x₀² + (σ² + γ²ν)T)
        X, U = simulate_lq(problem, ens, lambda i, x, n: np.zeros_like(x))
        J = lq_objective(problem, X, U)
        assert J.within(-0.5 * (4.0 + 0.13))

    def test_benchmark_matches_analytic(self, problem, ens):
        J = unconstrained_benchmark(problem, ens).J
        # Euler discretisation adds O(Δt)
        assert J.within(analytic_value(problem), slack=0.02)


class TestLQSolve:
    def test_converges_and_is_admissible(self, solved):
        assert solved.converged
        assert np.all(solved.u >= 0.0)

    def test_unconstrained_optimum_is_admissible_here(self, solved, problem, ens):
        # x₀ = −2: the unconstrained optimal control is mostly positive, so the
        # constrained value sits just below the benchmark
        bench = unconstrained_benchmark(problem, ens).J
        se = math.hypot(solved.J.stderr, bench.stderr)
        assert solved.J.estimate <= bench.estimate + 3 * se
        assert solved.J.estimate >= bench.estimate - 0.05

    def test_stationarity(self, solved):
        assert stationarity_check(solved).passed

    def test_perturbations_do_not_improve(self, solved, ens):
        assert perturbation_test(solved, ens, n_perturb=4)["passed"]

    def test_monotone(self, solved):
        assert solved.monotone_improvement()

    def test_boundary_case_zero_control(self, grid):
        # x₀ > 0 with u ≥ 0: p̂ = −E[X(T)|F_t] < 0, so û ≡ 0
        e = build_ensemble(2, 4000, 6, grid)
        it = lq_solve(ControlProblemLQ(2.0, 0.2, grid), e)
        assert np.mean(it.u[:, :-1] == 0.0) > 0.99
        assert it.J.within(-0.5 * (4.0 + 0.04))

    def test_unconstrained_solve_matches_benchmark(self, grid):
        e = build_ensemble(3, 6000, 6, grid)
        pb = ControlProblemLQ(1.0, 0.3, grid, constrained=False)
        it = lq_solve(pb, e)
        bench = unconstrained_benchmark(pb, e)
        assert abs(it.J.estimate - bench.J.estimate) < 0.01

    def test_bad_damping(self, problem, ens):
        with pytest.raises(ValueError):
            lq_solve(problem, ens, damping=0.0)

    def test_tables(self, solved):
        assert len(solved.table()) == solved.problem.grid.M + 1
        assert len(solved.iterations_table()) == solved.iteration + 1
        json.dumps(solved.summary())


class TestCashflow:
    def test_degenerate_value(self, grid):
        c, x0 = 2.0, 1.5
        spec = SVIEControlSpec(grid, x0=x0, theta=TerminalDescriptor(c))
        res = cashflow_solve(spec, build_ensemble(1, 200, 4, grid))
        np.testing.assert_allclose(res.u, 1.0 / c)
        np.testing.assert_allclose(res.J.estimate, degenerate_value(c, x0, 1.0), rtol=1e-12)
        np.testing.assert_allclose(res.X[:, -1], x0 - 1.0 / c, rtol=1e-12)

    def test_constant_memory_adjoint(self, grid):
        # b₀ ≡ a: p(t) = c e^{a(T − t)}
        a, c = 0.5, 1.2
        spec = SVIEControlSpec(grid, b0=lambda t, s: a * np.ones(np.broadcast(t, s).shape), theta=TerminalDescriptor(c))
        res = cashflow_solve(spec, build_ensemble(1, 100, 4, grid))
        np.testing.assert_allclose(res.p[0], c * np.exp(a * (1.0 - grid.points)), rtol=1e-10)
        assert res.first_order_residual < 1e-12

    def test_fubini_kernel_for_convolution_b0(self, grid):
        # b₀(t, s) = a e^{−k(t−s)} ⇒ Φ(t, z) = b₀(z, t)
        spec = SVIEControlSpec.from_config(json.loads((CONFIGS / "cashflow.json").read_text()))
        phi = spec.kernel()
        t = np.array([0.0, 0.2, 0.5])
        z = np.array([0.3, 0.9, 0.5])
        np.testing.assert_allclose(phi(t, z), 0.5 * np.exp(-2.0 * (z - t)), rtol=1e-12)

    def test_finite_difference_kernel(self, grid):
        f = lambda t, s: 0.5 * np.exp(-2.0 * (np.asarray(t) - np.asarray(s)))
        spec = SVIEControlSpec(grid, b0=f)
        np.testing.assert_allclose(spec.kernel()(0.2, 0.9), f(0.9, 0.2), rtol=1e-7)

    def test_adjoint_spec(self):
        spec = SVIEControlSpec.from_config(json.loads((CONFIGS / "cashflow.json").read_text()))
        adj = adjoint_spec(spec)
        assert adj.F.a == 3.0 and adj.F.b == 0.2 and adj.F.c == 0.1 and adj.F.pin == "T"

    def test_full_problem(self):
        spec = SVIEControlSpec.from_config(json.loads((CONFIGS / "cashflow.json").read_text()))
        e = build_ensemble(4, 4000, 6, spec.grid, levy=spec.levy)
        res = cashflow_solve(spec, e)
        assert np.all(res.u > 0) and res.first_order_residual < 1e-10
        # scaling the optimal consumption up or down lowers J (paired on the same paths)
        th = 3.0 + 0.2 * e.brownian[:, -1] + 0.1 * _jump_state(e)[:, -1]

        def payoff(u):
            X = simulate_cashflow(spec, e, u)
            return th * X[:, -1] + np.sum(np.log(u[:, :-1]), axis=1) * spec.grid.dt

        base = payoff(res.u)
        np.testing.assert_allclose(base.mean(), res.J.estimate, rtol=1e-12)
        for k in (0.8, 1.25):
            d = mc_mean(base - payoff(k * res.u))
            assert d.estimate > 0 and d.estimate >= -3 * d.stderr

    def test_hamiltonian_maximised(self, grid):
        spec = SVIEControlSpec(grid, b0=lambda t, s: 0.3 * np.ones(np.broadcast(t, s).shape))
        p = lambda s: 1.5
        us = np.linspace(0.2, 2.0, 181)
        H = svie_hamiltonian(spec, 0.25, 1.0, us, p)
        np.testing.assert_allclose(us[np.argmax(H)], 1.0 / 1.5, atol=0.01)

    def test_infeasible(self, grid):
        spec = SVIEControlSpec(grid, theta=TerminalDescriptor(-0.5))
        with pytest.raises(InfeasibleControlError) as ei:
            cashflow_solve(spec, build_ensemble(1, 50, 4, grid))
        assert isinstance(ei.value, InfeasibleError)

    def test_gamma_domain(self, grid):
        with pytest.raises(DomainError):
            SVIEControlSpec(grid, gamma0=-1.0, levy=LEVY)


class TestWorkedExamples:
    def test_hamiltonian_without_adjoints_is_running_reward(self, problem):
        c = coefficients(problem)
        u = np.array([0.0, 0.5, 2.0])
        np.testing.assert_allclose(hamiltonian(c, 0.3, 1.0, u, 0.0, 0.0, [0.0]), -0.5 * u ** 2)

    def test_noiseless_origin_has_zero_value(self, grid):
        pb = ControlProblemLQ(0.0, 0.0, grid, constrained=False)
        assert analytic_value(pb) == 0.0
        e = build_ensemble(5, 500, 4, grid)
        np.testing.assert_allclose(unconstrained_benchmark(pb, e).J.estimate, 0.0, atol=1e-14)

    def test_noiseless_positive_start_stays_put(self, grid):
        # σ = 0 and x₀ > 0 with u ≥ 0: doing nothing is optimal and X ≡ x₀
        e = build_ensemble(6, 500, 4, grid)
        it = lq_solve(ControlProblemLQ(1.5, 0.0, grid), e)
        np.testing.assert_allclose(it.u, 0.0)
        np.testing.assert_allclose(it.X, 1.5)
        np.testing.assert_allclose(it.J.estimate, -0.5 * 1.5 ** 2)
