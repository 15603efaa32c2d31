import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fypum.perturbation import Perturbation, lambda_value
from fypum.pum import choice_probabilities, surplus, surplus_hessian
from fypum.simplex import simplex_threshold
from oracles import central_gradient, grid_argmax, grid_surplus

FAMILIES = ["shannon", "quadratic", "cauchy", "nonseparable_quadratic"]


def make_pert(fam, mu, K, rng):
    if fam == "nonseparable_quadratic":
        A = rng.normal(size=(K, K))
        return Perturbation.nonseparable(A.T @ A + np.eye(K), mu)
    return Perturbation(fam, mu)


class TestSurplus:
    def test_shannon_zeros(self):
        assert surplus(Perturbation.shannon(1.0), [0.0, 0.0]) == pytest.approx(math.log(2), abs=1e-15)

    def test_quadratic_value(self):
        # Frozen from the grid oracle: grid_surplus([1, .5, -1], "quadratic", 1) = 0.5625.
        assert surplus(Perturbation.quadratic(1.0), [1.0, 0.5, -1.0]) == pytest.approx(0.5625, abs=1e-14)
        assert grid_surplus([1.0, 0.5, -1.0], "quadratic", 1.0) == pytest.approx(0.5625, abs=1e-6)

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_shift_by_constant(self, fam):
        rng = np.random.default_rng(17)
        pert = make_pert(fam, 0.9, 4, rng)
        v = rng.normal(size=4)
        assert surplus(pert, v + 3.7) == pytest.approx(surplus(pert, v) + 3.7, abs=1e-9)

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_matches_grid_oracle(self, fam):
        rng = np.random.default_rng(23)
        for _ in range(10):
            pert = make_pert(fam, rng.uniform(0.5, 2), 3, rng)
            v = rng.normal(size=3)
            ref = grid_surplus(v, fam, pert.mu, pert.Q)
            # The lattice under-approximates the supremum by O(mu h^2).
            assert ref - 1e-12 <= surplus(pert, v) <= ref + 1e-4


class TestChoiceProbabilities:
    def test_shannon_uniform(self):
        np.testing.assert_allclose(choice_probabilities(Perturbation.shannon(1.0), np.zeros(3)),
                                   np.full(3, 1 / 3), atol=1e-15)

    def test_quadratic_value(self):
        p = choice_probabilities(Perturbation.quadratic(1.0), [1.0, 0.5, -1.0])
        np.testing.assert_allclose(p, [0.75, 0.25, 0.0], atol=1e-15)
        np.testing.assert_allclose(grid_argmax([1.0, 0.5, -1.0], "quadratic", 1.0), p, atol=2e-3)

    def test_cauchy_symmetric(self):
        np.testing.assert_allclose(choice_probabilities(Perturbation.cauchy(1.0), [0.0, 0.0]), [0.5, 0.5],
                                   atol=1e-14)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            choice_probabilities(Perturbation.shannon(), [0.0, np.inf])

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_simplex_invariants(self, fam):
        rng = np.random.default_rng(2)
        pert = make_pert(fam, 0.4, 5, rng)
        P = choice_probabilities(pert, rng.normal(0, 3, size=(100, 5)))
        assert P.min() >= 0
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-10)

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_shift_invariance(self, fam):
        rng = np.random.default_rng(4)
        pert = make_pert(fam, 1.1, 4, rng)
        V = rng.normal(size=(30, 4))
        np.testing.assert_allclose(choice_probabilities(pert, V + 2.5), choice_probabilities(pert, V),
                                   atol=1e-10)

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_monotone_in_own_utility(self, fam):
        rng = np.random.default_rng(6)
        pert = make_pert(fam, 0.8, 4, rng)
        for _ in range(30):
            v = rng.normal(size=4)
            i = rng.integers(4)
            w = v.copy()
            w[i] += rng.uniform(0, 2)
            assert choice_probabilities(pert, w)[i] >= choice_probabilities(pert, v)[i] - 1e-10

    def test_quadratic_dispersion_limits(self):
        v = np.array([0.3, -0.2, 1.1, 0.9])
        sharp = choice_probabilities(Perturbation.quadratic(1e-3), v)
        flat = choice_probabilities(Perturbation.quadratic(1e3), v)
        assert np.abs(sharp - np.eye(4)[2]).max() < 1e-2
        assert np.abs(flat - 0.25).max() < 1e-2

    @pytest.mark.parametrize("fam", FAMILIES)
    def test_batch_equals_rows(self, fam):
        rng = np.random.default_rng(12)
        pert = make_pert(fam, 0.6, 3, rng)
        V = rng.normal(size=(8, 3))
        np.testing.assert_allclose(choice_probabilities(pert, V),
                                   np.stack([choice_probabilities(pert, v) for v in V]), atol=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(FAMILIES), st.floats(0.1, 5.0), st.integers(2, 6), st.integers(0, 2**31))
def test_fenchel_young_inequality(fam, mu, K, seed):
    rng = np.random.default_rng(seed)
    pert = make_pert(fam, mu, K, rng)
    v = rng.normal(0, 3, size=K)
    q = rng.dirichlet(np.ones(K))
    omega = surplus(pert, v)
    assert omega + lambda_value(pert, q) >= q @ v - 1e-9
    p = choice_probabilities(pert, v)
    assert omega + lambda_value(pert, p) == pytest.approx(p @ v, abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["shannon", "cauchy"]), st.floats(0.2, 3.0), st.integers(2, 5), st.integers(0, 2**31))
def test_surplus_gradient_is_probability(fam, mu, K, seed):
    rng = np.random.default_rng(seed)
    pert = Perturbation(fam, mu)
    v = rng.normal(0, 2, size=K)
    fd = central_gradient(lambda w: surplus(pert, w), v, h=1e-5)
    np.testing.assert_allclose(fd, choice_probabilities(pert, v), rtol=1e-5, atol=1e-9)


def test_quadratic_gradient_away_from_kinks():
    rng = np.random.default_rng(31)
    pert = Perturbation.quadratic(0.8)
    checked = 0
    while checked < 50:
        v = rng.normal(size=4)
        p = choice_probabilities(pert, v)
        # distance of each scaled utility to the activation threshold
        gap = np.abs(v / pert.mu - simplex_threshold(v / pert.mu))
        if gap.min() < 1e-3:
            continue
        fd = central_gradient(lambda w: surplus(pert, w), v, h=1e-6)
        np.testing.assert_allclose(fd, p, rtol=1e-5, atol=1e-8)
        checked += 1


class TestSurplusHessian:
    def test_fair_coin(self):
        H = surplus_hessian(Perturbation.shannon(2.0), [0.0, 0.0])
        np.testing.assert_allclose(H, np.array([[0.25, -0.25], [-0.25, 0.25]]) / 2.0, atol=1e-15)

    @pytest.mark.parametrize("fam", ["shannon", "quadratic", "cauchy"])
    def test_analytic_matches_fd(self, fam):
        rng = np.random.default_rng(0)
        pert = Perturbation(fam, 0.9)
        V = rng.normal(size=(10, 4))
        np.testing.assert_allclose(surplus_hessian(pert, V, method="analytic"),
                                   surplus_hessian(pert, V, method="fd"), atol=1e-6)

    def test_rows_sum_to_zero(self):
        rng = np.random.default_rng(1)
        A = rng.normal(size=(3, 3))
        pert = Perturbation.nonseparable(A.T @ A + np.eye(3), 0.5)
        H = surplus_hessian(pert, rng.normal(size=(5, 3)))
        np.testing.assert_allclose(H.sum(axis=-1), 0.0, atol=1e-6)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            surplus_hessian(Perturbation.shannon(), [0.0, 1.0], method="exact")
