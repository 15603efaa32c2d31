import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fypum.perturbation import Perturbation
from fypum.simplex import (ConvergenceError, RootMethod, SolverConfig, normalize_batch, project_simplex,
                           simplex_threshold, solve_normalization, solve_primal_nonseparable)
from oracles import grid_argmax

finite_vectors = arrays(np.float64, st.integers(1, 8),
                        elements=st.floats(-50, 50, allow_nan=False, allow_infinity=False))


class TestProjectSimplex:
    def test_already_on_simplex(self):
        np.testing.assert_allclose(project_simplex([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5], atol=1e-15)

    def test_nearest_vertex(self):
        np.testing.assert_array_equal(project_simplex([2.0, 0.0]), [1.0, 0.0])

    def test_symmetric(self):
        np.testing.assert_array_equal(project_simplex([0.8, 0.8]), [0.5, 0.5])

    def test_batched_rows_match_single(self):
        rng = np.random.default_rng(0)
        V = rng.normal(size=(7, 5))
        np.testing.assert_array_equal(project_simplex(V), np.stack([project_simplex(v) for v in V]))

    @given(finite_vectors)
    def test_kkt_threshold(self, v):
        p = project_simplex(v)
        assert np.all(p >= 0)
        assert abs(p.sum() - 1) <= 1e-10
        theta = simplex_threshold(v)
        np.testing.assert_allclose(p, np.maximum(v - theta, 0.0), atol=1e-10)

    @given(finite_vectors, st.integers(0, 2**32 - 1))
    def test_nonexpansive(self, u, seed):
        w = u + np.random.default_rng(seed).normal(size=u.shape)
        assert np.linalg.norm(project_simplex(u) - project_simplex(w)) <= np.linalg.norm(u - w) + 1e-12

    def test_is_closest_point(self):
        # Against random simplex points: nothing is closer than the projection.
        rng = np.random.default_rng(2)
        for _ in range(50):
            v = rng.normal(0, 2, size=4)
            p = project_simplex(v)
            Z = rng.dirichlet(np.ones(4), size=2000)
            assert np.linalg.norm(v - p) <= np.linalg.norm(v - Z, axis=1).min() + 1e-12


class TestSolveNormalization:
    def test_shannon_closed_form(self):
        rep = solve_normalization(Perturbation.shannon(1.0).kernel, [0.0, 0.0])
        assert rep.lam == pytest.approx(math.log(2) - 1, abs=1e-11)
        assert rep.residual <= 1e-12
        assert rep.method is RootMethod.BISECTION

    def test_quadratic_active_set_value(self):
        # Active set {0, 1}: (1 - lam) + (0.5 - lam) = 1  ->  lam = 0.25.
        rep = solve_normalization(Perturbation.quadratic(1.0).kernel, [1.0, 0.5, -1.0])
        assert rep.lam == pytest.approx(0.25, abs=1e-11)

    def test_cauchy_antisymmetric(self):
        rep = solve_normalization(Perturbation.cauchy(1.0).kernel, [1.0, -1.0])
        assert rep.lam == pytest.approx(0.0, abs=1e-11)

    @pytest.mark.parametrize("method", list(RootMethod))
    def test_methods_agree(self, method):
        rng = np.random.default_rng(4)
        kern = Perturbation.cauchy(0.7).kernel
        for _ in range(20):
            v = rng.normal(0, 3, size=5)
            ref = solve_normalization(kern, v).lam
            rep = solve_normalization(kern, v, method=method)
            assert rep.residual <= 1e-12
            assert rep.lam == pytest.approx(ref, abs=1e-9)

    def test_newton_needs_fewer_iterations(self):
        kern = Perturbation.cauchy(1.0).kernel
        v = np.array([0.3, -1.2, 2.5, 0.0])
        assert (solve_normalization(kern, v, method="newton").iterations
                < solve_normalization(kern, v).iterations)

    @pytest.mark.parametrize("fam", ["shannon", "quadratic", "cauchy"])
    def test_bracket_residual_monotone(self, fam):
        rng = np.random.default_rng(9)
        kern = Perturbation(fam, 0.5).kernel
        for _ in range(20):
            trace = np.array(solve_normalization(kern, rng.normal(0, 5, size=6)).trace)
            assert np.all(np.diff(trace) <= 0)

    def test_far_utilities_expand_bracket(self):
        rep = solve_normalization(Perturbation.shannon(0.01).kernel, [1e4, 1e4 - 0.01])
        assert rep.residual <= 1e-12

    def test_max_iter_reported(self):
        with pytest.raises(ConvergenceError, match="residual"):
            solve_normalization(Perturbation.cauchy(1.0).kernel, [0.3, 0.1, -2.0], SolverConfig(max_iter=3))

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(1)
        kern = Perturbation.cauchy(1.5).kernel
        V = rng.normal(0, 4, size=(30, 6))
        lam = normalize_batch(kern, V)
        np.testing.assert_allclose(lam, [solve_normalization(kern, v).lam for v in V], atol=1e-10)


class TestNonseparablePrimal:
    def test_identity_q_is_sparsemax(self):
        rng = np.random.default_rng(0)
        pert = Perturbation.nonseparable(np.eye(5), mu=0.7)
        V = rng.normal(size=(20, 5))
        np.testing.assert_allclose(solve_primal_nonseparable(pert, V), project_simplex(V / 0.7), atol=1e-12)

    def test_constant_utilities_identity_q(self):
        pert = Perturbation.nonseparable(np.eye(4))
        np.testing.assert_allclose(solve_primal_nonseparable(pert, np.full(4, 3.3)), np.full(4, 0.25),
                                   atol=1e-12)

    def test_diagonal_q_grid_oracle(self):
        Q = np.diag([1.0, 2.0, 4.0])
        pert = Perturbation.nonseparable(Q)
        p = solve_primal_nonseparable(pert, np.ones(3))
        # Interior optimum of an equal-utility quadratic: p proportional to 1 / diag(Q).
        np.testing.assert_allclose(p, [4 / 7, 2 / 7, 1 / 7], atol=1e-9)
        np.testing.assert_allclose(p, grid_argmax(np.ones(3), "nonseparable_quadratic", 1.0, Q), atol=2e-3)

    def test_random_instances_grid_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(30):
            K = int(rng.integers(2, 5))
            A = rng.normal(size=(K, K))
            Q = A.T @ A + np.eye(K)
            mu = rng.uniform(0.3, 2.0)
            v = rng.normal(size=K)
            p = solve_primal_nonseparable(Perturbation.nonseparable(Q, mu), v)
            np.testing.assert_allclose(p, grid_argmax(v, "nonseparable_quadratic", mu, Q), atol=2e-3)

    def test_kkt_residual_meets_tolerance(self):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(6, 6))
        pert = Perturbation.nonseparable(A.T @ A + np.eye(6), 0.4)
        V = rng.normal(size=(50, 6))
        P = solve_primal_nonseparable(pert, V)
        eta = 1 / (pert.mu * pert.q_lambda_max)
        res = np.linalg.norm(P - project_simplex(P + eta * (V - pert.mu * P @ pert.Q)), axis=1) / eta
        assert res.max() <= 1e-9

    def test_warm_start_same_answer(self):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(4, 4))
        pert = Perturbation.nonseparable(A.T @ A + np.eye(4), 1.0)
        V = rng.normal(size=(10, 4))
        cold = solve_primal_nonseparable(pert, V)
        warm = solve_primal_nonseparable(pert, V, p0=cold + 0.01)
        np.testing.assert_allclose(warm, cold, atol=1e-8)

    def test_wrong_family(self):
        with pytest.raises(ValueError):
            solve_primal_nonseparable(Perturbation.quadratic(), [1.0, 2.0])


@settings(max_examples=50)
@given(st.floats(-20, 20), st.integers(2, 6), st.integers(0, 10_000))
def test_solver_config_validation_does_not_block_defaults(shift, K, seed):
    cfg = SolverConfig()
    v = np.random.default_rng(seed).normal(size=K) + shift
    rep = solve_normalization(Perturbation.cauchy(1.0).kernel, v, cfg)
    assert rep.residual <= cfg.tol_root


def test_solver_config_rejects_bad_values():
    with pytest.raises(ValueError):
        SolverConfig(tol_root=0)
    with pytest.raises(ValueError):
        SolverConfig(tau=-1.0)
