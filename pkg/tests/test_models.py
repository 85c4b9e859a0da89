import numpy as np
import pytest

from margfilt import (
    GaussianBelief,
    OutputModelA,
    TransitionModelA,
    TransitionModelB,
    central_jacobian,
    default_lin_point,
    lower_to_b,
    lower_to_c,
    lower_to_d,
    update_d,
)
from margfilt.errors import BadPartition, NonInvertibleNoiseJacobian


class TestCentralJacobian:
    def test_linear_exact(self):
        jac = central_jacobian(lambda x: np.array([2.0 * x[0] + x[1], x[1]]), np.array([1.0, 2.0]))
        np.testing.assert_allclose(jac, [[2.0, 1.0], [0.0, 1.0]], atol=1e-9)

    def test_scalar_quadratic(self):
        jac = central_jacobian(lambda x: np.array([x[0] ** 2]), np.array([3.0]))
        np.testing.assert_allclose(jac, [[6.0]], rtol=1e-8)


class TestLowerToB:
    def test_additive_noise_unchanged(self):
        model = TransitionModelA(1, 1, func=lambda x, w: x + w, noise_cov=[[1.0]])
        lowered = lower_to_b(model)
        np.testing.assert_allclose(lowered.func(np.array([1.5])), [1.5])
        np.testing.assert_allclose(lowered.noise_input(np.array([1.5])), [[1.0]], rtol=1e-8)

    def test_multiplicative_noise(self):
        # f(x, w) = x exp(w): value x, noise Jacobian x at w=0.
        model = TransitionModelA(1, 1, func=lambda x, w: x * np.exp(w), noise_cov=[[1.0]])
        lowered = lower_to_b(model)
        np.testing.assert_allclose(lowered.func(np.array([2.0])), [2.0])
        np.testing.assert_allclose(lowered.noise_input(np.array([2.0])), [[2.0]], rtol=1e-6)

    def test_output_state_dependent_scale(self):
        model = OutputModelA(
            1, 1, 1,
            func=lambda x, v: np.sin(x) + (1.0 + x**2) * v,
            noise_cov=[[1.0]],
        )
        lowered = lower_to_b(model)
        x = np.array([0.7])
        np.testing.assert_allclose(lowered.func(x), np.sin(x))
        np.testing.assert_allclose(lowered.noise_input(x), [[1.0 + 0.49]], rtol=1e-7)

    def test_singular_output_jacobian(self):
        model = OutputModelA(1, 1, 1, func=lambda x, v: x + 0.0 * v, noise_cov=[[1.0]])
        lowered = lower_to_b(model)
        with pytest.raises(NonInvertibleNoiseJacobian):
            lowered.noise_input(np.array([1.0]))

    def test_idempotent_on_level_b_form(self):
        # Already additive-noise model: lowering changes outputs by < 1e-8.
        def gmat(x):
            return np.array([[1.0 + 0.5 * np.sin(x[0]), 0.2], [0.0, 2.0 - x[0] ** 2 * 0.1]])

        def value(x):
            return np.array([x[0] ** 2, np.cos(x[0])])

        model = TransitionModelA(
            2, 2,
            func=lambda x, w: value(x) + gmat(x) @ w,
            noise_cov=np.eye(2),
        )
        lowered = lower_to_b(model)
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = rng.normal(size=2)
            np.testing.assert_allclose(lowered.func(x), value(x), atol=1e-8)
            np.testing.assert_allclose(lowered.noise_input(x), gmat(x), atol=1e-8)

    def test_analytic_jacobian_preferred(self):
        model = TransitionModelA(
            1, 1,
            func=lambda x, w: x + 3.0 * w,
            noise_cov=[[1.0]],
            jac_noise=lambda x: np.array([[3.0]]),
        )
        lowered = lower_to_b(model)
        np.testing.assert_array_equal(lowered.noise_input(np.array([0.0])), [[3.0]])


class TestLowerToC:
    def test_conditionally_linear_reproduced_exactly(self):
        # Affine in the linear block: lowering at any point reproduces it.
        fmat = np.array([[0.5], [1.5]])

        def func(z, w):
            return np.array([z[0] ** 2, np.sin(z[0])]) + fmat[:, 0] * z[1] + w

        model = TransitionModelA(2, 2, func=func, noise_cov=np.eye(2))
        for point in (0.0, -3.0, 7.0):
            lowered = lower_to_c(model, [point], [0], [1])
            xn = np.array([1.3])
            np.testing.assert_allclose(lowered.linear_map(xn), fmat, atol=1e-7)
            np.testing.assert_allclose(
                lowered.func(xn), [1.3**2, np.sin(1.3)], atol=1e-6
            )

    def test_quadratic_cross_term(self):
        # f = [xn^2; xn*xl] at xl_bar = 1: linear map [0; xn], value [xn^2; 0].
        model = TransitionModelA(
            2, 1,
            func=lambda z, w: np.array([z[0] ** 2 + w[0], z[0] * z[1]]),
            noise_cov=[[1.0]],
        )
        lowered = lower_to_c(model, [1.0], [0], [1])
        xn = np.array([1.5])
        np.testing.assert_allclose(lowered.linear_map(xn), [[0.0], [1.5]], atol=1e-7)
        np.testing.assert_allclose(lowered.func(xn), [2.25, 0.0], atol=1e-6)

    def test_zero_lin_point_linear_model(self):
        model = TransitionModelA(
            2, 1,
            func=lambda z, w: np.array([2.0 * z[0] + z[1] + 1.0, z[1] + w[0]]),
            noise_cov=[[1.0]],
        )
        lowered = lower_to_c(model, [0.0], [0], [1])
        xn = np.array([0.5])
        np.testing.assert_allclose(lowered.func(xn), [2.0, 0.0], atol=1e-6)

    def test_bad_partition(self):
        model = TransitionModelA(2, 1, func=lambda z, w: z, noise_cov=[[1.0]])
        with pytest.raises(BadPartition):
            lower_to_c(model, [0.0], [0], [0])
        with pytest.raises(BadPartition):
            lower_to_c(model, [0.0], [0], [])

    def test_level_b_source(self):
        model = TransitionModelB(
            2, 1,
            func=lambda z: np.array([z[0] ** 2 + 0.3 * z[1], z[1]]),
            noise_input=lambda z: np.array([[1.0], [0.5 * z[0]]]),
            noise_cov=[[2.0]],
        )
        lowered = lower_to_c(model, [0.7], [0], [1])
        xn = np.array([-0.4])
        np.testing.assert_allclose(lowered.linear_map(xn), [[0.3], [1.0]], atol=1e-6)
        np.testing.assert_allclose(lowered.noise_input(xn), [[1.0], [-0.2]], atol=1e-10)


class TestLowerToD:
    def test_linear_model_identity(self):
        fmat = np.array([[0.8, 0.1], [0.0, 0.9]])
        model = TransitionModelA(
            2, 2, func=lambda z, w: fmat @ z + w, noise_cov=np.eye(2)
        )
        for point in ([0.0, 0.0], [3.0, -2.0]):
            lowered = lower_to_d(model, point)
            np.testing.assert_allclose(lowered.state_map, fmat, atol=1e-7)
            np.testing.assert_allclose(lowered.offset, 0, atol=1e-6)

    def test_quadratic_frozen_values(self):
        model = TransitionModelA(1, 1, func=lambda x, w: x**2 + w, noise_cov=[[1.0]])
        lowered = lower_to_d(model, [3.0])
        np.testing.assert_allclose(lowered.state_map, [[6.0]], rtol=1e-7)
        np.testing.assert_allclose(lowered.offset, [-9.0], rtol=1e-6)

    def test_cubic_output_frozen_values(self):
        model = OutputModelA(1, 1, 1, func=lambda x, v: x**3 + v, noise_cov=[[1.0]])
        lowered = lower_to_d(model, [1.0])
        np.testing.assert_allclose(lowered.state_map, [[3.0]], rtol=1e-7)
        np.testing.assert_allclose(lowered.offset, [-2.0], rtol=1e-5)
        np.testing.assert_allclose(lowered.noise_input, [[1.0]], rtol=1e-8)

    def test_matches_explicit_ekf_update(self):
        # Lowered closed form equals a hand-linearized Kalman update at the
        # same linearization point.
        model = OutputModelA(
            1, 1, 1,
            func=lambda x, v: x**3 + v,
            noise_cov=[[0.5]],
            jac_state=lambda x: np.atleast_2d(3.0 * np.asarray(x, dtype=float) ** 2),
            jac_noise=lambda x: np.eye(1),
        )
        prior = GaussianBelief([0.8], [[0.4]])
        y = np.array([1.0])
        lowered = lower_to_d(model, prior.mean)
        result = update_d(lowered, prior, y)

        hmat = 3.0 * 0.8**2
        innov_cov = hmat * 0.4 * hmat + 0.5
        gain = 0.4 * hmat / innov_cov
        mean = 0.8 + gain * (1.0 - 0.8**3)
        cov = (1.0 - gain * hmat) * 0.4
        np.testing.assert_allclose(result.active_mean, [mean], atol=1e-10)
        np.testing.assert_allclose(result.active_cov, [[cov]], atol=1e-10)


class TestDefaultLinPoint:
    def test_projection_of_mean(self):
        belief = GaussianBelief([1.0, 2.0], np.eye(2))
        np.testing.assert_allclose(default_lin_point(belief, [[0.0, 1.0]]), [2.0])

    def test_zero_mean(self):
        belief = GaussianBelief(np.zeros(3), np.eye(3))
        np.testing.assert_allclose(default_lin_point(belief, np.eye(3)), np.zeros(3))

    def test_full_identity(self):
        belief = GaussianBelief([0.5, -1.5], np.eye(2))
        np.testing.assert_allclose(default_lin_point(belief, np.eye(2)), [0.5, -1.5])
