import math

import numpy as np
import pytest

from tensorstep import (
    LogisticProblem,
    QuadraticProblem,
    make_logistic,
    make_online_logistic,
    make_quadratic,
    problem_from_json,
    problem_to_json,
)
from tensorstep.problems import LOGISTIC_LINK_BOUNDS, link_d1, link_d2, link_d3, link_value

from conftest import central_diff_grad, central_diff_jacobian


class TestQuadratic:
    def test_identity_instance(self):
        prob = QuadraticProblem(np.eye(3), np.zeros(3))
        e1 = np.array([1.0, 0.0, 0.0])
        assert prob.value(e1) == pytest.approx(0.5)
        np.testing.assert_allclose(prob.gradient(e1), e1)
        np.testing.assert_allclose(prob.hessian(e1), np.eye(3))

    def test_third_derivative_is_zero(self, rng):
        prob = make_quadratic(4, seed=0)
        x, s = rng.standard_normal(4), rng.standard_normal(4)
        vec, scalar = prob.third_directional(x, s)
        assert np.all(vec == 0) and scalar == 0.0

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            QuadraticProblem(np.diag([1.0, -0.5]), np.zeros(2))

    def test_lipschitz_profile(self):
        prob = QuadraticProblem(np.diag([1.0, 2.0]), np.zeros(2))
        prof = prob.lipschitz_profile(np.zeros(2), radius=1.0)
        assert prof.lip(1) == pytest.approx(2.0)
        assert prof.lip(2) == pytest.approx(1e-8)  # floored
        assert prof.lip(3) == pytest.approx(1e-8)

    def test_single_component_equals_full(self, rng):
        prob = make_quadratic(3, seed=1)
        x = rng.standard_normal(3)
        assert prob.component_value(0, x) == prob.value(x)
        np.testing.assert_array_equal(prob.component_gradient(0, x), prob.gradient(x))


class TestLogisticLink:
    def test_value_at_zero(self):
        assert link_value(0.0) == pytest.approx(math.log(2.0))

    def test_first_derivative_at_zero(self):
        assert link_d1(np.array([0.0]))[0] == pytest.approx(-0.5)

    def test_third_derivative_odd_at_zero(self):
        assert link_d3(np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-15)

    def test_overflow_safe(self):
        big = np.array([800.0, -800.0])
        vals = link_value(big)
        assert np.isfinite(vals).all()
        assert vals[0] == pytest.approx(0.0, abs=1e-12)
        assert vals[1] == pytest.approx(800.0)

    @pytest.mark.parametrize("order,deriv", [(2, link_d2), (3, link_d3)])
    def test_link_bounds_by_grid_maximization(self, order, deriv):
        # 1-D maximization oracle over a wide grid
        ts = np.linspace(-30, 30, 400001)
        observed = np.abs(deriv(ts)).max()
        assert observed <= LOGISTIC_LINK_BOUNDS[order - 1] + 1e-12
        assert observed == pytest.approx(LOGISTIC_LINK_BOUNDS[order - 1], rel=1e-6)

    def test_second_derivative_bound_value(self):
        assert LOGISTIC_LINK_BOUNDS[1] == pytest.approx(0.25)

    def test_third_derivative_bound_value(self):
        # known closed form sqrt(3)/18
        assert LOGISTIC_LINK_BOUNDS[2] == pytest.approx(0.09622504486, abs=1e-9)


class TestLogisticProblem:
    def test_single_row_at_origin(self):
        prob = LogisticProblem(np.array([[1.0, 0.0]]), np.array([1.0]), mu=0.0)
        x = np.zeros(2)
        assert prob.value(x) == pytest.approx(math.log(2.0))
        np.testing.assert_allclose(prob.gradient(x), [-0.5, 0.0])

    def test_gradient_matches_finite_differences(self, rng):
        prob = make_logistic(n=5, m=30, seed=3, mu=1e-2)
        for _ in range(5):
            x = rng.standard_normal(5)
            fd = central_diff_grad(prob.value, x)
            g = prob.gradient(x)
            assert np.linalg.norm(g - fd) / max(1.0, np.linalg.norm(fd)) < 1e-6

    def test_hessian_matches_finite_differences(self, rng):
        prob = make_logistic(n=4, m=25, seed=4, mu=1e-2)
        x = rng.standard_normal(4)
        fd = central_diff_jacobian(prob.gradient, x)
        assert np.abs(prob.hessian(x) - fd).max() < 1e-6

    def test_third_matches_finite_differences_of_hessian(self, rng):
        prob = make_logistic(n=4, m=25, seed=5, mu=1e-3)
        x = rng.standard_normal(4)
        s = rng.standard_normal(4)
        h = 1e-6
        fd = (prob.hessian(x + h * s) - prob.hessian(x - h * s)) / (2 * h)
        analytic = prob.third(x).apply(s)
        assert np.abs(analytic - fd).max() < 1e-5 * max(1.0, np.abs(fd).max())

    def test_dense_third_matches_directional(self, rng):
        prob = make_logistic(n=5, m=20, seed=6)
        x, s = rng.standard_normal(5), rng.standard_normal(5)
        dense = prob.third(x, dense=True)
        vec, scalar = prob.third_directional(x, s)
        np.testing.assert_allclose(dense.apply2(s), vec, atol=1e-10)
        assert dense.apply3(s) == pytest.approx(scalar, abs=1e-10)

    def test_hessian_psd_with_ridge(self, rng):
        prob = make_logistic(n=5, m=40, seed=7, mu=1e-3)
        for _ in range(10):
            x = rng.standard_normal(5)
            lam = np.linalg.eigvalsh(prob.hessian(x)).min()
            assert lam >= prob.mu - 1e-10

    def test_component_average_reproduces_exact(self, rng):
        prob = make_logistic(n=4, m=3, seed=8, mu=1e-2)
        x = rng.standard_normal(4)
        grad_avg = sum(prob.component_gradient(j, x) for j in range(3)) / 3.0
        np.testing.assert_allclose(grad_avg, prob.gradient(x), atol=1e-12)
        hess_avg = sum(prob.component_hessian(j, x) for j in range(3)) / 3.0
        np.testing.assert_allclose(hess_avg, prob.hessian(x), atol=1e-12)

    def test_full_batch_bitwise_equals_exact(self, rng):
        prob = make_logistic(n=5, m=17, seed=9)
        x = rng.standard_normal(5)
        idx = np.arange(17)
        assert np.array_equal(prob.batch_gradient(x, idx), prob.gradient(x))
        assert np.array_equal(prob.batch_hessian(x, idx), prob.hessian(x))

    def test_lipschitz_certificate_on_random_pairs(self, rng):
        prob = make_logistic(n=4, m=30, seed=10, mu=1e-3)
        x0 = np.zeros(4)
        radius = 2.0
        prof = prob.lipschitz_profile(x0, radius)
        for _ in range(100):
            u = rng.standard_normal(4)
            x = x0 + u / np.linalg.norm(u) * rng.uniform(0, radius)
            v = rng.standard_normal(4)
            y = x0 + v / np.linalg.norm(v) * rng.uniform(0, radius)
            dist = np.linalg.norm(x - y)
            assert abs(prob.value(x) - prob.value(y)) <= prof.lip(0) * dist * (1 + 1e-6)
            assert np.linalg.norm(prob.gradient(x) - prob.gradient(y)) \
                <= prof.lip(1) * dist * (1 + 1e-6)
            hdiff = np.linalg.norm(prob.hessian(x) - prob.hessian(y), 2)
            assert hdiff <= prof.lip(2) * dist * (1 + 1e-6)


class TestDraws:
    def test_offline_full_batch_is_everything(self, rng):
        prob = make_logistic(n=3, m=12, seed=11)
        draw = prob.draw(12, np.random.default_rng(0))
        assert sorted(draw.indices.tolist()) == list(range(12))

    def test_offline_no_duplicates(self):
        prob = make_logistic(n=3, m=40, seed=12)
        gen = np.random.default_rng(5)
        for _ in range(25):
            draw = prob.draw(17, gen)
            assert len(set(draw.indices.tolist())) == 17

    def test_offline_oversize_rejected(self):
        prob = make_logistic(n=3, m=10, seed=13)
        with pytest.raises(ValueError):
            prob.draw(11, np.random.default_rng(0))

    def test_online_uniformity_chi_square(self):
        prob = make_online_logistic(n=3, pool=16, seed=14)
        gen = np.random.default_rng(6)
        total = 100_000
        draw = prob.draw(total, gen)
        counts = np.bincount(draw.indices, minlength=16)
        expected = total / 16
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        # 15 dof: mean 15, sd sqrt(30); 3 sigma
        assert chi2 <= 15 + 3 * math.sqrt(30)

    def test_online_count_draw_matches_multinomial_semantics(self):
        prob = make_online_logistic(n=3, pool=8, seed=15)
        gen = np.random.default_rng(7)
        draw = prob.draw(2_000_000, gen)
        assert draw.counts is not None and draw.indices is None
        assert draw.counts.sum() == 2_000_000
        np.testing.assert_allclose(draw.counts / 2e6, np.full(8, 1 / 8), atol=2e-3)

    def test_count_draw_weighted_gradient(self, rng):
        prob = make_online_logistic(n=3, pool=8, seed=15)
        x = rng.standard_normal(3)
        draw = prob.draw(2_000_000, np.random.default_rng(8))
        g = prob.batch_gradient(x, draw)
        assert np.linalg.norm(g - prob.gradient(x)) < 1e-2


class TestSerialization:
    def test_quadratic_roundtrip(self, rng):
        prob = make_quadratic(3, seed=16)
        clone = problem_from_json(problem_to_json(prob))
        x = rng.standard_normal(3)
        assert clone.value(x) == pytest.approx(prob.value(x), abs=1e-15)

    def test_logistic_generator_roundtrip(self, rng):
        prob = make_logistic(n=4, m=20, seed=17, mu=1e-2)
        clone = problem_from_json(problem_to_json(prob))
        x = rng.standard_normal(4)
        assert clone.value(x) == prob.value(x)
        assert clone.m == prob.m

    def test_online_generator_roundtrip(self, rng):
        prob = make_online_logistic(n=3, pool=64, seed=18, clamp=1.5)
        clone = problem_from_json(problem_to_json(prob))
        x = rng.standard_normal(3)
        assert clone.value(x) == prob.value(x)
        assert clone.mode == "online"
        assert clone.clamp == prob.clamp
