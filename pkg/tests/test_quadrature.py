import numpy as np
import pytest

from margfilt import (
    GaussHermiteRule,
    KernelConfig,
    MonteCarloRule,
    OutputModelA,
    UnscentedRule,
    WeightedSampleSet,
    estimate,
    kde_likelihood_at,
    nodes_for,
)
from margfilt.errors import DimensionTooLarge, ZeroBandwidth, ZeroTotalWeight
from margfilt.quadrature import gaussian_kernel_values, silverman_bandwidth


class TestWeightedSampleSet:
    def test_validation(self):
        with pytest.raises(ValueError):
            WeightedSampleSet(np.zeros((3, 1)), np.ones(2))
        with pytest.raises(ValueError):
            WeightedSampleSet(np.zeros((2, 1)), [-1.0, 1.0])
        with pytest.raises(ValueError):
            WeightedSampleSet(np.zeros((2, 1)), [0.0, 0.0])

    def test_one_dim_points_promoted(self):
        ws = WeightedSampleSet(np.array([1.0, 2.0]), np.array([0.5, 0.5]))
        assert ws.points.shape == (2, 1)


class TestGaussHermiteNodes:
    def test_degree_one_is_mean(self):
        ws = nodes_for(GaussHermiteRule(1), [3.0, -1.0], np.diag([2.0, 5.0]))
        assert ws.count == 1
        np.testing.assert_allclose(ws.points[0], [3.0, -1.0])
        np.testing.assert_allclose(ws.weights, [1.0])

    def test_degree_three_standard_normal(self):
        # Known rule; verified against exact Gaussian moments up to order 5.
        ws = nodes_for(GaussHermiteRule(3), [0.0], [[1.0]])
        np.testing.assert_allclose(
            np.sort(ws.points.ravel()), [-np.sqrt(3.0), 0.0, np.sqrt(3.0)], atol=1e-12
        )
        order = np.argsort(ws.points.ravel())
        np.testing.assert_allclose(
            ws.weights[order], [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], atol=1e-12
        )
        exact = {0: 1.0, 1: 0.0, 2: 1.0, 3: 0.0, 4: 3.0, 5: 0.0}
        for power, moment in exact.items():
            approx = float(ws.weights @ ws.points.ravel() ** power)
            assert abs(approx - moment) < 1e-12

    def test_exactness_property(self):
        # Degree g integrates monomials of total degree <= 2g-1 exactly.
        def dfact(k):
            out = 1.0
            while k > 1:
                out *= k
                k -= 2
            return out

        for dim in (1, 2, 3):
            for degree in (2, 3, 5):
                ws = nodes_for(GaussHermiteRule(degree), np.zeros(dim), np.eye(dim))
                rng = np.random.default_rng(dim * 10 + degree)
                for _ in range(20):
                    exps = rng.multinomial(2 * degree - 1, np.ones(dim) / dim)
                    vals = np.prod(ws.points**exps, axis=1)
                    exact = 1.0
                    for k in exps:
                        exact = 0.0 if k % 2 else exact * dfact(k - 1)
                    assert abs(float(ws.weights @ vals) - exact) < 1e-10

    def test_weights_sum_to_one(self):
        ws = nodes_for(GaussHermiteRule(5), np.zeros(3), np.eye(3))
        assert abs(ws.weights.sum() - 1.0) < 1e-12

    def test_node_budget(self):
        with pytest.raises(DimensionTooLarge):
            nodes_for(GaussHermiteRule(5, node_budget=100), np.zeros(4), np.eye(4))


class TestUnscentedNodes:
    def test_matches_generating_moments(self):
        rng = np.random.default_rng(9)
        for dim in (1, 2, 4):
            a = rng.normal(size=(dim, dim))
            cov = a @ a.T / dim + 0.5 * np.eye(dim)
            mean = rng.normal(size=dim)
            ws = nodes_for(UnscentedRule(1.3), mean, cov)
            assert ws.count == 2 * dim + 1
            assert abs(ws.weights.sum() - 1.0) < 1e-12
            emp_mean = ws.weights @ ws.points
            dev = ws.points - emp_mean
            emp_cov = (dev * ws.weights[:, None]).T @ dev
            np.testing.assert_allclose(emp_mean, mean, atol=1e-12)
            np.testing.assert_allclose(emp_cov, cov, atol=1e-12)


class TestMonteCarloNodes:
    def test_seeded_determinism(self):
        rule = MonteCarloRule(500, seed=42)
        a = nodes_for(rule, [1.0, 2.0], np.eye(2))
        b = nodes_for(rule, [1.0, 2.0], np.eye(2))
        np.testing.assert_array_equal(a.points, b.points)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_different_seeds_differ(self):
        a = nodes_for(MonteCarloRule(100, seed=1), [0.0], [[1.0]])
        b = nodes_for(MonteCarloRule(100, seed=2), [0.0], [[1.0]])
        assert not np.array_equal(a.points, b.points)

    def test_equal_weights(self):
        ws = nodes_for(MonteCarloRule(250, seed=0), [0.0], [[1.0]])
        np.testing.assert_array_equal(ws.weights, np.full(250, 1.0 / 250.0))

    def test_moments_within_four_standard_errors(self):
        # 500 seeded trials; >= 99% of first/second-moment estimates must be
        # within four standard errors of the truth.
        count = 2000
        failures = 0
        checks = 0
        for seed in range(500):
            ws = nodes_for(MonteCarloRule(count, seed=seed), [0.0], [[1.0]])
            x = ws.points.ravel()
            checks += 2
            if abs(x.mean()) > 4.0 / np.sqrt(count):
                failures += 1
            if abs((x**2).mean() - 1.0) > 4.0 * np.sqrt(2.0 / count):
                failures += 1
        assert failures <= 0.01 * checks


class TestEstimate:
    def test_first_moment(self):
        ws = nodes_for(GaussHermiteRule(3), [2.5], [[4.0]])
        np.testing.assert_allclose(estimate(lambda p: p, ws), [2.5], atol=1e-12)

    def test_second_moment(self):
        ws = nodes_for(GaussHermiteRule(2), [0.0], [[1.0]])
        assert abs(estimate(lambda p: p[0] ** 2, ws) - 1.0) < 1e-12

    def test_fourth_moment_degree_three(self):
        ws = nodes_for(GaussHermiteRule(3), [0.0], [[1.0]])
        assert abs(estimate(lambda p: p[0] ** 4, ws) - 3.0) < 1e-12

    def test_constant_is_exact(self):
        for rule in (GaussHermiteRule(4), UnscentedRule(), MonteCarloRule(64, seed=3)):
            ws = nodes_for(rule, [0.3], [[2.0]])
            assert abs(estimate(lambda p: 7.25, ws) - 7.25) < 1e-14

    def test_zero_total_weight(self):
        with pytest.raises(ValueError):
            WeightedSampleSet(np.zeros((2, 1)), [0.0, 0.0])


class TestKernelConfig:
    def test_fixed_matrix_validated(self):
        KernelConfig(bandwidth=np.array([[0.1]]))
        with pytest.raises(ZeroBandwidth):
            KernelConfig(bandwidth=np.array([[0.0]]))
        with pytest.raises(ZeroBandwidth):
            KernelConfig(bandwidth=np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            KernelConfig(bandwidth="scott")


class TestKdeLikelihood:
    def _model(self):
        return OutputModelA(
            1, 1, 1,
            func=lambda x, v: x + v,
            noise_cov=[[1.0]],
            vectorized=True,
        )

    def test_converges_to_convolution(self):
        # h = x + v with standard normal v: the KDE estimate targets the
        # convolution N(y; x, 1 + Z); with a small fixed bandwidth and 1e5
        # samples it matches the exact density within 5%.
        model = self._model()
        z = 0.01
        noise = nodes_for(MonteCarloRule(100_000, seed=21), [0.0], [[1.0]])
        config = KernelConfig(bandwidth=np.array([[z]]))
        for x, y in ((0.0, 0.5), (1.0, 2.0)):
            est = kde_likelihood_at([x], [y], model, config, noise)
            exact = np.exp(-0.5 * (y - x) ** 2 / (1.0 + z)) / np.sqrt(2 * np.pi * (1 + z))
            assert abs(est - exact) / exact < 0.05

    def test_exact_hit_gives_kernel_peak(self):
        # All noise samples map the node exactly onto y: the estimate is the
        # kernel peak value (bandwidth floored).
        model = self._model()
        noise = WeightedSampleSet(np.zeros((50, 1)), np.ones(50))
        y = np.array([1.5])
        est = kde_likelihood_at([1.5], y, model, KernelConfig(), noise)
        floor = 1e-9 * (1.0 + abs(y[0]))
        peak = float(gaussian_kernel_values(np.zeros((1, 1)), np.diag([floor**2]))[0])
        np.testing.assert_allclose(est, peak, rtol=1e-12)

    def test_zero_weights_error(self):
        model = self._model()
        noise = WeightedSampleSet(np.zeros((5, 1)), np.ones(5))
        object.__setattr__(noise, "weights", np.zeros(5))
        with pytest.raises(ZeroTotalWeight):
            kde_likelihood_at([0.0], [0.0], model, KernelConfig(), noise)

    def test_silverman_shrinks_with_samples(self):
        rng = np.random.default_rng(5)
        y = np.zeros(1)
        small = silverman_bandwidth(rng.normal(size=(100, 1)), np.ones(100), y)
        large = silverman_bandwidth(rng.normal(size=(10_000, 1)), np.ones(10_000), y)
        assert large[0, 0] < small[0, 0]


class TestSuppliedSampleSets:
    def test_passthrough_with_dimension_check(self):
        ws = WeightedSampleSet(np.zeros((4, 2)), np.ones(4))
        assert nodes_for(ws, np.zeros(2), np.eye(2)) is ws
        with pytest.raises(ValueError):
            nodes_for(ws, np.zeros(3), np.eye(3))
