import numpy as np
import pytest

from margfilt import (
    BoundModel,
    GaussHermiteRule,
    GaussianBelief,
    MonteCarloRule,
    OutputModelA,
    OutputModelD,
    PredictionMoments,
    StepConfig,
    TransitionModelA,
    TransitionModelD,
    UpdateMoments,
    assemble_prediction,
    assemble_update,
    inactive_gain,
    make_split,
    step,
)
from margfilt.baselines import LinearSystem, kalman_step
from margfilt.errors import DegenerateUpdate
from margfilt.moments import predict_d, update_d


def random_spd(rng, n, scale=1.0):
    a = rng.normal(size=(n, n))
    return scale * (a @ a.T / n + 0.5 * np.eye(n))


def orthogonal_split(rng, n, rows):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return make_split(q[:rows], q[rows:])


TRIVIAL_1D = make_split(np.eye(1), np.zeros((0, 1)))


class TestAssemblePrediction:
    def test_trivial_split_maps_active_moments(self):
        rng = np.random.default_rng(0)
        split = make_split(2.0 * np.eye(2), np.zeros((0, 2)))
        prior = GaussianBelief(rng.normal(size=2), random_spd(rng, 2))
        moments = PredictionMoments([1.0, 2.0], np.eye(2), 0.5 * np.eye(2))
        out = assemble_prediction(prior, split, moments)
        np.testing.assert_allclose(out.mean, split.inv_active @ moments.active_mean)
        np.testing.assert_allclose(
            out.cov, split.inv_active @ moments.active_cov @ split.inv_active.T, atol=1e-12
        )

    def test_identity_prediction_is_fixed_point(self):
        rng = np.random.default_rng(1)
        split = orthogonal_split(rng, 3, 2)
        prior = GaussianBelief(rng.normal(size=3), random_spd(rng, 3))
        active_cov = split.active @ prior.cov @ split.active.T
        moments = PredictionMoments(split.active @ prior.mean, active_cov, active_cov)
        out = assemble_prediction(prior, split, moments)
        np.testing.assert_allclose(out.mean, prior.mean, atol=1e-12)
        np.testing.assert_allclose(out.cov, prior.cov, atol=1e-12)

    def test_full_cov_matches_monte_carlo_joint(self):
        # Brute-force joint construction of (next, previous) state samples.
        rng = np.random.default_rng(2)
        n = 3
        split = orthogonal_split(rng, n, 1)
        prior = GaussianBelief(rng.normal(size=n), random_spd(rng, n))
        fmat = np.array([[0.8]])
        fvec = np.array([0.3])
        gmat = np.array([[1.0]])
        pw = np.array([[0.4]])
        model = TransitionModelD(fvec, fmat, gmat, pw)
        moments = predict_d(model, prior.marginal(split.active))
        out = assemble_prediction(prior, split, moments)

        count = 1_000_000
        states = rng.multivariate_normal(prior.mean, prior.cov, size=count)
        noise = rng.normal(scale=np.sqrt(pw[0, 0]), size=count)
        active_next = fvec[0] + fmat[0, 0] * states @ split.active[0] + gmat[0, 0] * noise
        nxt = (
            split.inv_active @ active_next[None, :]
            + split.inv_inactive @ (states @ split.inactive.T).T
        ).T
        mc_mean = nxt.mean(axis=0)
        dev = nxt - mc_mean
        mc_cov = dev.T @ dev / count
        assert np.max(np.abs(out.mean - mc_mean)) < 0.01
        assert np.max(np.abs(out.cov - mc_cov)) < 0.02

    def test_inactive_block_untouched(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(2, 6))
            rows = int(rng.integers(1, n))
            split = orthogonal_split(rng, n, rows)
            prior = GaussianBelief(rng.normal(size=n), random_spd(rng, n))
            trans = TransitionModelD(
                rng.normal(size=rows),
                rng.normal(size=(rows, rows)),
                rng.normal(size=(rows, rows)),
                random_spd(rng, rows, 0.4),
            )
            out = assemble_prediction(prior, split, predict_d(trans, prior.marginal(split.active)))
            inact = split.inactive
            np.testing.assert_allclose(inact @ out.mean, inact @ prior.mean, atol=1e-12)
            np.testing.assert_allclose(
                inact @ out.cov @ inact.T, inact @ prior.cov @ inact.T, atol=1e-12
            )


class TestAssembleUpdate:
    def test_uninformative_update_is_fixed_point(self):
        rng = np.random.default_rng(4)
        split = orthogonal_split(rng, 3, 2)
        prior = GaussianBelief(rng.normal(size=3), random_spd(rng, 3))
        moments = UpdateMoments(
            split.active @ prior.mean, split.active @ prior.cov @ split.active.T
        )
        out = assemble_update(prior, split, moments)
        np.testing.assert_allclose(out.mean, prior.mean, atol=1e-12)
        np.testing.assert_allclose(out.cov, prior.cov, atol=1e-12)

    def test_trivial_split_maps_active_moments(self):
        split = make_split(np.eye(2), np.zeros((0, 2)))
        prior = GaussianBelief([0.0, 0.0], np.eye(2))
        moments = UpdateMoments([1.0, -1.0], 0.5 * np.eye(2))
        out = assemble_update(prior, split, moments)
        np.testing.assert_allclose(out.mean, [1.0, -1.0])
        np.testing.assert_allclose(out.cov, 0.5 * np.eye(2), atol=1e-14)

    def test_matches_full_state_kalman(self):
        rng = np.random.default_rng(5)
        n = 2
        split = orthogonal_split(rng, n, 1)
        prior = GaussianBelief(rng.normal(size=n), random_spd(rng, n))
        out_model = OutputModelD([0.2], [[1.3]], [[1.0]], [[0.6]])
        y = np.array([0.9])
        moments = update_d(out_model, prior.marginal(split.active), y)
        assembled = assemble_update(prior, split, moments)

        h_full = out_model.state_map @ split.active
        innov = h_full @ prior.cov @ h_full.T + np.array([[0.6]])
        gain = prior.cov @ h_full.T @ np.linalg.inv(innov)
        mean = prior.mean + (gain @ (y - 0.2 - h_full @ prior.mean)).ravel()
        cov = prior.cov - gain @ h_full @ prior.cov
        np.testing.assert_allclose(assembled.mean, mean, atol=1e-10)
        np.testing.assert_allclose(assembled.cov, cov, atol=1e-10)

    def test_update_gain_relation(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            n = int(rng.integers(2, 6))
            rows = int(rng.integers(1, n))
            split = orthogonal_split(rng, n, rows)
            prior = GaussianBelief(rng.normal(size=n), random_spd(rng, n))
            moments = UpdateMoments(rng.normal(size=rows), random_spd(rng, rows))
            out = assemble_update(prior, split, moments)
            gain = inactive_gain(prior, split)
            lhs = split.inactive @ (out.mean - prior.mean)
            rhs = gain @ (split.active @ (out.mean - prior.mean))
            np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_posterior_cov_psd(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(2, 6))
            rows = int(rng.integers(1, n))
            split = orthogonal_split(rng, n, rows)
            prior = GaussianBelief(rng.normal(size=n), random_spd(rng, n))
            moments = UpdateMoments(rng.normal(size=rows), random_spd(rng, rows, 0.5))
            out = assemble_update(prior, split, moments)
            assert np.linalg.eigvalsh(out.cov)[0] >= -1e-10


class TestStep:
    def _linear_setup(self, rng):
        split = TRIVIAL_1D
        trans = TransitionModelD([0.0], [[0.9]], [[1.0]], [[0.3]])
        out = OutputModelD([0.0], [[1.0]], [[1.0]], [[0.5]])
        belief = GaussianBelief([0.2], [[1.0]])
        return belief, BoundModel(trans, split), BoundModel(out, split)

    def test_level_d_is_textbook_kalman_step(self):
        rng = np.random.default_rng(8)
        belief, trans, out = self._linear_setup(rng)
        y = np.array([0.7])
        report = step(belief, trans, out, y, StepConfig(predict_level="d", update_level="d"))
        system = LinearSystem(
            np.array([[0.9]]), np.zeros(1), np.array([[0.3]]),
            np.array([[1.0]]), np.zeros(1), np.array([[0.5]]),
        )
        (pm, pc), (um, uc) = kalman_step(belief.mean, belief.cov, system, y)
        np.testing.assert_allclose(report.predicted.mean, pm, atol=1e-12)
        np.testing.assert_allclose(report.predicted.cov, pc, atol=1e-12)
        np.testing.assert_allclose(report.updated.mean, um, atol=1e-12)
        np.testing.assert_allclose(report.updated.cov, uc, atol=1e-12)

    def test_absent_measurement_predict_only(self):
        rng = np.random.default_rng(9)
        belief, trans, out = self._linear_setup(rng)
        report = step(belief, trans, out, None, StepConfig())
        assert report.update_moments is None
        np.testing.assert_array_equal(report.updated.mean, report.predicted.mean)
        np.testing.assert_array_equal(report.updated.cov, report.predicted.cov)

    def test_same_seed_bit_identical(self):
        model = TransitionModelA(
            1, 1,
            func=lambda x, w: np.sin(x) + w,
            noise_cov=[[0.3]],
            vectorized=True,
        )
        out = OutputModelA(
            1, 1, 1,
            func=lambda x, v: x + v,
            noise_cov=[[0.5]],
            likelihood=lambda y, x: np.exp(
                -0.5 * (y[0] - np.asarray(x).reshape(-1)) ** 2 / 0.5
            ),
            vectorized=True,
        )
        belief = GaussianBelief([0.1], [[0.8]])
        config = StepConfig(
            predict_level="a",
            update_level="a-likelihood",
            predict_rule=MonteCarloRule(4000, seed=0),
            update_rule=MonteCarloRule(4000, seed=0),
        )
        r1 = step(belief, BoundModel(model, TRIVIAL_1D), BoundModel(out, TRIVIAL_1D), [0.4], config, seed=99)
        r2 = step(belief, BoundModel(model, TRIVIAL_1D), BoundModel(out, TRIVIAL_1D), [0.4], config, seed=99)
        np.testing.assert_array_equal(r1.updated.mean, r2.updated.mean)
        np.testing.assert_array_equal(r1.updated.cov, r2.updated.cov)
        r3 = step(belief, BoundModel(model, TRIVIAL_1D), BoundModel(out, TRIVIAL_1D), [0.4], config, seed=100)
        assert not np.array_equal(r1.updated.mean, r3.updated.mean)

    def test_mc_fallback_flag(self):
        model = TransitionModelA(
            2, 2,
            func=lambda x, w: x + w,
            noise_cov=np.eye(2),
            vectorized=True,
        )
        split = make_split(np.eye(2), np.zeros((0, 2)))
        belief = GaussianBelief(np.zeros(2), np.eye(2))
        config = StepConfig(
            predict_level="a",
            predict_rule=GaussHermiteRule(9, node_budget=100),  # 9^4 nodes > 100
            mc_fallback_count=2000,
        )
        report = step(belief, BoundModel(model, split), None, None, config, seed=1)
        assert report.flags.mc_fallback
        assert report.predict_nodes == 2000
        assert np.all(np.isfinite(report.predicted.mean))

    def test_degenerate_update_policies(self):
        belief = GaussianBelief([0.0], [[1.0]])
        trans = BoundModel(TransitionModelD([0.0], [[1.0]], [[1.0]], [[0.1]]), TRIVIAL_1D)
        out_model = OutputModelA(
            1, 1, 1,
            func=lambda x, v: x + v,
            noise_cov=[[1.0]],
            likelihood=lambda y, x: np.exp(
                -0.5 * (y[0] - np.asarray(x).reshape(-1)) ** 2
            ),
            vectorized=True,
        )
        out = BoundModel(out_model, TRIVIAL_1D)
        keep = StepConfig(update_level="a-likelihood", update_rule=GaussHermiteRule(9))
        report = step(belief, trans, out, [1e6], keep)
        assert report.flags.degenerate_update_skipped
        np.testing.assert_array_equal(report.updated.mean, report.predicted.mean)
        strict = StepConfig(
            update_level="a-likelihood", update_rule=GaussHermiteRule(9), on_degenerate="error"
        )
        with pytest.raises(DegenerateUpdate):
            step(belief, trans, out, [1e6], strict)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            StepConfig(predict_level="x")
        with pytest.raises(ValueError):
            StepConfig(update_level="z")
        with pytest.raises(ValueError):
            StepConfig(on_degenerate="ignore")
