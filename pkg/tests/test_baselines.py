import numpy as np
import pytest

from gbcdgp.baselines import (
    BaselineConfig,
    bcdc_solve,
    bcdg_solve,
    cg_solve,
    cyclic_block,
    direct_solve,
    run_direct,
    smo_solve,
    solve,
    top_gradient_block,
)
from gbcdgp.errors import ContractViolation, RefusalError
from gbcdgp.gbcd import SolveConfig
from gbcdgp.kernels import KernelSpec
from gbcdgp.problem import Problem


def random_problem(seed, n, d=2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = rng.normal(size=n)
    spec = KernelSpec(tuple(rng.uniform(0.1, 2.0, size=d)), float(rng.uniform(0.05, 1.0)))
    return Problem(X, y, spec)


class TestDirect:
    def test_scalar(self):
        p = Problem([[0.0]], [3.0], KernelSpec((1.0,), 0.5))
        np.testing.assert_allclose(direct_solve(p), [2.0], rtol=1e-15)

    def test_cap(self):
        p = random_problem(0, 30)
        with pytest.raises(RefusalError):
            direct_solve(p, cap=20)

    def test_single_row_trace(self):
        p = random_problem(1, 40)
        a, rep = run_direct(p)
        assert rep.converged and len(rep.objective_trace) == 1
        assert rep.final_grad_inf_norm <= 1e-10
        np.testing.assert_allclose(a, np.linalg.solve(p.ops.dense(), p.rhs), rtol=1e-9, atol=1e-12)


class TestBlockChoice:
    def test_cyclic_wraps(self):
        np.testing.assert_array_equal(cyclic_block(5, 2, 0), [0, 1])
        np.testing.assert_array_equal(cyclic_block(5, 2, 2), [4, 0])
        np.testing.assert_array_equal(cyclic_block(5, 2, 3), [1, 2])

    def test_top_gradient(self):
        g = np.array([0.1, -3.0, 2.0, 3.0, 0.0])
        np.testing.assert_array_equal(top_gradient_block(g, 2), [1, 3])
        np.testing.assert_array_equal(top_gradient_block(g, 3), [1, 2, 3])

    def test_top_gradient_ties_lowest_index(self):
        np.testing.assert_array_equal(top_gradient_block(np.ones(6), 2), [0, 1])


class TestIterative:
    @pytest.mark.parametrize("runner", [cg_solve, bcdc_solve, bcdg_solve, smo_solve])
    def test_decoupled(self, runner):
        # Kbar = 1.5 I
        y = np.array([1.0, -2.0, 0.5, 3.0])
        p = Problem(np.arange(4.0)[:, None], y, KernelSpec((1e6,), 0.5))
        a, rep = runner(p, BaselineConfig(m=2, tol=1e-12))
        assert rep.converged
        np.testing.assert_allclose(a, y / 1.5, rtol=1e-14)

    @pytest.mark.parametrize("method", ["cg", "bcdc", "bcdg", "smo"])
    def test_matches_direct(self, method):
        p = random_problem(3, 150)
        ref = direct_solve(p)
        a, rep = solve(p, method, BaselineConfig(method=method, m=20, tol=1e-9, max_iters=200_000))
        assert rep.converged
        assert rep.final_grad_inf_norm <= 1e-9
        assert np.max(np.abs(a - ref)) <= 1e-6 * (1 + np.max(np.abs(ref)))

    def test_all_methods_agree(self):
        p = random_problem(4, 300, d=3)
        sols = [solve(p, "direct")[0]]
        sols.append(solve(p, "gbcd", SolveConfig(m=40, kappa=20, tol=1e-8))[0])
        for method in ("cg", "bcdc", "bcdg", "smo"):
            a, rep = solve(p, method, BaselineConfig(method=method, m=40, tol=1e-8, max_iters=200_000))
            assert rep.converged, method
            sols.append(a)
        for i in range(len(sols)):
            for j in range(i):
                assert np.max(np.abs(sols[i] - sols[j])) <= 1e-5

    @pytest.mark.parametrize("runner", [bcdc_solve, bcdg_solve])
    def test_block_invariants(self, runner):
        p = random_problem(5, 120)
        K = p.ops.dense()
        scale = 1 + np.max(np.abs(p.rhs))

        def check(state, B, delta):
            g = K @ state.alpha - p.rhs
            assert np.max(np.abs(g[B])) <= 1e-8 * scale
            np.testing.assert_allclose(state.grad, g, atol=1e-9)

        _, rep = runner(p, BaselineConfig(m=15, tol=1e-8, max_iters=100_000), callback=check)
        assert rep.converged and rep.decrease_violations == 0

    @pytest.mark.parametrize("method", ["cg", "bcdc", "bcdg", "smo"])
    def test_objective_non_increasing(self, method):
        p = random_problem(6, 80)
        _, rep = solve(p, method, BaselineConfig(method=method, m=10, tol=1e-8))
        f = [r.objective for r in rep.objective_trace]
        assert all(b <= a + 1e-10 for a, b in zip(f, f[1:]))
        K = p.ops.dense()
        a = solve(p, method, BaselineConfig(method=method, m=10, tol=1e-8))[0]
        assert f[-1] == pytest.approx(0.5 * a @ K @ a - p.rhs @ a, rel=1e-8, abs=1e-10)

    def test_cg_counts_full_products(self):
        p = random_problem(7, 50)
        _, rep = cg_solve(p, BaselineConfig(tol=1e-8))
        assert rep.kernel_evals == rep.outer_iters * 50 * 50

    def test_smo_counts_two_columns(self):
        p = random_problem(8, 30)
        _, rep = smo_solve(p, BaselineConfig(method="smo", tol=1e-6))
        assert rep.kernel_evals == rep.outer_iters * 2 * 30

    def test_smo_needs_two_points(self):
        with pytest.raises(ContractViolation):
            smo_solve(Problem([[0.0]], [1.0], KernelSpec((1.0,), 0.1)))

    def test_iteration_cap_reports_non_convergence(self):
        p = random_problem(9, 100)
        for method in ("cg", "bcdc", "bcdg", "smo"):
            a, rep = solve(p, method, BaselineConfig(method=method, m=5, tol=1e-12, max_iters=2))
            assert not rep.converged
            assert rep.outer_iters == 2

    def test_bad_config(self):
        p = random_problem(0, 10)
        with pytest.raises(ContractViolation):
            solve(p, "cg", BaselineConfig(tol=-1.0))
        with pytest.raises(ContractViolation):
            solve(p, "bcdc", BaselineConfig(method="bcdc", m=0))
        with pytest.raises(ContractViolation):
            solve(p, "lsqr")
