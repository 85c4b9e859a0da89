"""Marginal moment integrals for prediction and update at every model level.

Prediction reduces to three moments of the active block (mean, covariance,
and cross-covariance with the previous active state); update reduces to the
posterior mean and covariance of the active block. Level d is closed form,
level c integrates only over the nonlinear part of the active block, level b
over the active block, and level a over the active block and the noise
jointly.

All sample-based paths are two-pass: the mean is estimated first and the
centered second moments are accumulated over the identical node set. Update
normalization constants are always computed by self-normalization over the
node set, so likelihoods only need to be known up to scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateUpdate,
    NonInvertibleNoiseJacobian,
    RuleUnsupportedForNoise,
    SingularInnovationCov,
    SingularNodeCov,
)
from .gaussian import (
    GaussianBelief,
    SubspaceSplit,
    chol_factor,
    condition_on_sub,
    solve_spd,
    symmetrize,
    _validated_cov,
    _freeze,
)
from .models import (
    OutputModelA,
    OutputModelB,
    OutputModelC,
    OutputModelD,
    TransitionModelA,
    TransitionModelB,
    TransitionModelC,
    TransitionModelD,
)
from .quadrature import (
    DEGENERATE_WEIGHT,
    KernelConfig,
    MonteCarloRule,
    WeightedSampleSet,
    kde_likelihood_at,
    mc_generator,
    nodes_for,
)


@dataclass(frozen=True)
class PredictionMoments:
    """Marginal prediction moments of the active block.

    active_mean/active_cov are the predicted first two moments; cross_cov is
    the covariance between the predicted and the previous active state.
    """

    active_mean: np.ndarray
    active_cov: np.ndarray
    cross_cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.active_mean, dtype=float))
        cov = _validated_cov(self.active_cov, mean.size)
        cross = np.atleast_2d(np.asarray(self.cross_cov, dtype=float))
        if cross.shape[0] != mean.size:
            raise ValueError("cross_cov rows inconsistent with active_mean")
        object.__setattr__(self, "active_mean", _freeze(mean))
        object.__setattr__(self, "active_cov", _freeze(cov))
        object.__setattr__(self, "cross_cov", _freeze(cross))

    @property
    def dim(self) -> int:
        return self.active_mean.size


@dataclass(frozen=True)
class UpdateMoments:
    """Posterior mean and covariance of the active output block."""

    active_mean: np.ndarray
    active_cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.active_mean, dtype=float))
        cov = _validated_cov(self.active_cov, mean.size)
        object.__setattr__(self, "active_mean", _freeze(mean))
        object.__setattr__(self, "active_cov", _freeze(cov))

    @property
    def dim(self) -> int:
        return self.active_mean.size


def _block_diag(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + b.shape[0], a.shape[0] + b.shape[0]))
    out[: a.shape[0], : a.shape[0]] = a
    out[a.shape[0] :, a.shape[0] :] = b
    return out


def _noise_cov(model) -> np.ndarray:
    if model.dim_noise == 0:
        return np.zeros((0, 0))
    if model.noise_cov is None:
        raise ValueError("model does not define a noise covariance")
    return np.atleast_2d(np.asarray(model.noise_cov, dtype=float))


def _joint_nodes(model, prior: GaussianBelief, rule, noise_first: bool) -> WeightedSampleSet:
    """Nodes over the joint of the model noise and the active prior.

    Gaussian noise admits any rule (block-diagonal joint Gaussian); otherwise
    only Monte Carlo draws via the model sampler, or caller-supplied sample
    sets, are legal.
    """
    dw = model.dim_noise
    if isinstance(rule, WeightedSampleSet):
        return nodes_for(rule, np.zeros(dw + prior.dim), np.eye(dw + prior.dim))
    if model.noise_gaussian or dw == 0:
        ncov = _noise_cov(model)
        if noise_first:
            mean = np.concatenate([np.zeros(dw), prior.mean])
            cov = _block_diag(ncov, prior.cov)
        else:
            mean = np.concatenate([prior.mean, np.zeros(dw)])
            cov = _block_diag(prior.cov, ncov)
        return nodes_for(rule, mean, cov)
    if not isinstance(rule, MonteCarloRule):
        raise RuleUnsupportedForNoise(
            "non-Gaussian noise requires Monte Carlo or caller-supplied samples"
        )
    if model.noise_sampler is None:
        raise RuleUnsupportedForNoise("non-Gaussian noise model has no sampler")
    rng = mc_generator(rule.seed)
    noise = np.asarray(model.noise_sampler(rng, rule.count), dtype=float).reshape(
        rule.count, dw
    )
    factor = chol_factor(prior.cov)
    states = prior.mean[None, :] + rng.standard_normal((rule.count, prior.dim)) @ factor.T
    pts = (
        np.concatenate([noise, states], axis=1)
        if noise_first
        else np.concatenate([states, noise], axis=1)
    )
    return WeightedSampleSet(pts, np.full(rule.count, 1.0 / rule.count))


def _eval_pairs(func, first: np.ndarray, second: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        return np.asarray(func(first, second), dtype=float).reshape(first.shape[0], -1)
    rows = [
        np.atleast_1d(np.asarray(func(first[i], second[i]), dtype=float))
        for i in range(first.shape[0])
    ]
    return np.stack(rows)


def _eval_single(func, points: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        return np.asarray(func(points), dtype=float).reshape(points.shape[0], -1)
    rows = [np.atleast_1d(np.asarray(func(p), dtype=float)) for p in points]
    return np.stack(rows)


def _eval_matrix(func, points: np.ndarray, rows: int, cols: int, vectorized: bool) -> np.ndarray:
    """(count, rows, cols) stack of per-node matrices; constants broadcast."""
    count = points.shape[0]
    if vectorized:
        out = np.asarray(func(points), dtype=float)
        if out.size == rows * cols:
            return np.broadcast_to(out.reshape(rows, cols), (count, rows, cols))
        return out.reshape(count, rows, cols)
    return np.stack(
        [np.atleast_2d(np.asarray(func(p), dtype=float)) for p in points]
    )


def predict_a(
    model: TransitionModelA, prior_active: GaussianBelief, rule
) -> PredictionMoments:
    """Prediction moments by integrating the raw transition over (noise, state)."""
    samples = _joint_nodes(model, prior_active, rule, noise_first=True)
    dw = model.dim_noise
    noise = samples.points[:, :dw]
    states = samples.points[:, dw:]
    values = _eval_pairs(model.func, states, noise, model.vectorized)
    w = samples.weights
    total = w.sum()
    mean = w @ values / total
    dev = values - mean
    cov = symmetrize((dev * w[:, None]).T @ dev / total)
    cross = (dev * w[:, None]).T @ (states - prior_active.mean) / total
    return PredictionMoments(mean, cov, cross)


def predict_b(
    model: TransitionModelB, prior_active: GaussianBelief, rule
) -> PredictionMoments:
    """Prediction moments with the noise marginalized out analytically."""
    samples = nodes_for(rule, prior_active.mean, prior_active.cov)
    states = samples.points
    values = _eval_single(model.func, states, model.vectorized)
    w = samples.weights
    total = w.sum()
    mean = w @ values / total
    dev = values - mean
    cov = (dev * w[:, None]).T @ dev
    gains = _eval_matrix(
        model.noise_input, states, model.dim_active, model.dim_noise, model.vectorized
    )
    cov = cov + np.einsum("n,nij,jk,nlk->il", w, gains, model.noise_cov, gains)
    cov = symmetrize(cov / total)
    cross = (dev * w[:, None]).T @ (states - prior_active.mean) / total
    return PredictionMoments(mean, cov, cross)


def predict_c(
    model: TransitionModelC,
    prior_full: GaussianBelief,
    split: SubspaceSplit,
    rule,
) -> PredictionMoments:
    """Prediction moments with the conditionally linear block marginalized out.

    The split's active rows must be ordered [nonlinear; linear] to match the
    model. Integration runs over the nonlinear block only; per node, the
    linear block is propagated by a closed-form affine-Gaussian recursion and
    only the block integrands are accumulated.
    """
    dn, dl = model.dim_nonlinear, model.dim_linear
    if split.dim_active != dn + dl:
        raise ValueError("split active rows inconsistent with model dimensions")
    rows_n = split.active[:dn]
    rows_l = split.active[dn:]
    lin_given_non = condition_on_sub(prior_full, given=rows_n, target=rows_l)
    cond_cov = lin_given_non.cov
    prior_n = prior_full.marginal(rows_n)
    prior_l_mean = rows_l @ prior_full.mean
    noise_cov = _noise_cov(model)

    samples = nodes_for(rule, prior_n.mean, prior_n.cov)
    pts = samples.points
    w = samples.weights
    count = pts.shape[0]

    pred_n = np.empty((count, dn))
    pred_l = np.empty((count, dl))
    non_cov = np.empty((count, dn, dn))
    lin_gain = np.empty((count, dl, dn))
    prev_gain = np.empty((count, dl, dn))
    resid_cov = np.empty((count, dl, dl))
    resid_cross = np.empty((count, dl, dl))
    lin_prev_dev = np.empty((count, dl))

    for i in range(count):
        xn = pts[i]
        cond_mean = lin_given_non.mean_at(xn)
        fmat = np.atleast_2d(np.asarray(model.linear_map(xn), dtype=float))
        gmat = np.atleast_2d(np.asarray(model.noise_input(xn), dtype=float))
        fval = np.atleast_1d(np.asarray(model.func(xn), dtype=float))
        fn, fl = fmat[:dn], fmat[dn:]
        gn, gl = gmat[:dn], gmat[dn:]
        gp = gmat @ noise_cov
        fp = fmat @ cond_cov
        nn = symmetrize(fn @ cond_cov @ fn.T + gp[:dn] @ gn.T)
        ln = fl @ cond_cov @ fn.T + gp[dn:] @ gn.T
        ll = symmetrize(fl @ cond_cov @ fl.T + gp[dn:] @ gl.T)
        gain = solve_spd(nn, ln.T, err=SingularNodeCov).T
        prev = solve_spd(nn, (cond_cov @ fn.T).T, err=SingularNodeCov).T
        pred_n[i] = fval[:dn] + fn @ cond_mean
        pred_l[i] = fval[dn:] + fl @ cond_mean
        non_cov[i] = nn
        lin_gain[i] = gain
        prev_gain[i] = prev
        resid_cov[i] = ll - gain @ ln.T
        resid_cross[i] = fp[dn:] - gain @ fp[:dn]
        lin_prev_dev[i] = cond_mean - prior_l_mean

    total = w.sum()
    mean_n = w @ pred_n / total
    mean_l = w @ pred_l / total
    non_dev = pred_n - mean_n
    lin_dev = pred_l - mean_l
    non_prev_dev = pts - prior_n.mean

    gain_cov = np.einsum("nij,njk->nik", lin_gain, non_cov)
    cov_nn = np.einsum("n,nij->ij", w, non_cov) + (non_dev * w[:, None]).T @ non_dev
    cov_nl = (non_dev * w[:, None]).T @ lin_dev + np.einsum(
        "n,nij,nkj->ik", w, non_cov, lin_gain
    )
    cov_ll = (
        np.einsum("n,nij->ij", w, resid_cov)
        + (lin_dev * w[:, None]).T @ lin_dev
        + np.einsum("n,nij,nkj->ik", w, gain_cov, lin_gain)
    )
    cross_nn = (non_dev * w[:, None]).T @ non_prev_dev
    cross_nl = (non_dev * w[:, None]).T @ lin_prev_dev + np.einsum(
        "n,nij,nkj->ik", w, non_cov, prev_gain
    )
    cross_ln = (lin_dev * w[:, None]).T @ non_prev_dev
    cross_ll = (
        np.einsum("n,nij->ij", w, resid_cross)
        + (lin_dev * w[:, None]).T @ lin_prev_dev
        + np.einsum("n,nij,nkj->ik", w, gain_cov, prev_gain)
    )

    mean = np.concatenate([mean_n, mean_l])
    cov = np.block([[cov_nn, cov_nl], [cov_nl.T, cov_ll]]) / total
    cross = np.block([[cross_nn, cross_nl], [cross_ln, cross_ll]]) / total
    return PredictionMoments(mean, symmetrize(cov), cross)


def predict_d(model: TransitionModelD, prior_active: GaussianBelief) -> PredictionMoments:
    """Closed-form prediction moments for the affine-Gaussian level."""
    fmat = model.state_map
    mean = model.offset + fmat @ prior_active.mean
    cross = fmat @ prior_active.cov
    cov = symmetrize(cross @ fmat.T + model.noise_input @ model.noise_cov @ model.noise_input.T)
    return PredictionMoments(mean, cov, cross)


def _self_normalized(
    states: np.ndarray, weights: np.ndarray, likelihoods: np.ndarray
) -> UpdateMoments:
    lweights = weights * likelihoods
    total = float(lweights.sum())
    if not np.isfinite(total) or total <= DEGENERATE_WEIGHT:
        raise DegenerateUpdate(f"total likelihood weight {total:g}")
    mean = lweights @ states / total
    dev = states - mean
    cov = symmetrize((dev * lweights[:, None]).T @ dev / total)
    return UpdateMoments(mean, cov)


def update_likelihood(
    likelihood, prior_active: GaussianBelief, y, rule, vectorized: bool = False
) -> UpdateMoments:
    """Self-normalized posterior moments for a likelihood known up to scale."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    samples = nodes_for(rule, prior_active.mean, prior_active.cov)
    states = samples.points
    if vectorized:
        lik = np.asarray(likelihood(y, states), dtype=float).reshape(-1)
    else:
        lik = np.array(
            [float(np.asarray(likelihood(y, x), dtype=float).reshape(-1)[0]) for x in states]
        )
    if np.any(lik < 0) or not np.all(np.isfinite(lik)):
        raise ValueError("likelihood values must be finite and nonnegative")
    return _self_normalized(states, samples.weights, lik)


def update_a_kde(
    model: OutputModelA,
    prior_active: GaussianBelief,
    y,
    rule,
    kernel: KernelConfig,
    noise_rule,
) -> UpdateMoments:
    """Update with the likelihood replaced by a kernel density estimate.

    The noise sample set is drawn once (from noise_rule against the model's
    noise distribution) and shared across all prior nodes; the bandwidth is
    chosen per node from the propagated outputs.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    noise_samples = _noise_sample_set(model, noise_rule)
    samples = nodes_for(rule, prior_active.mean, prior_active.cov)
    lik = np.array(
        [
            kde_likelihood_at(x, y, model, kernel, noise_samples)
            for x in samples.points
        ]
    )
    return _self_normalized(samples.points, samples.weights, lik)


def _noise_sample_set(model, noise_rule) -> WeightedSampleSet:
    if isinstance(noise_rule, WeightedSampleSet):
        return noise_rule
    if isinstance(noise_rule, MonteCarloRule) and model.noise_sampler is not None:
        rng = mc_generator(noise_rule.seed)
        pts = np.asarray(model.noise_sampler(rng, noise_rule.count), dtype=float)
        return WeightedSampleSet(
            pts.reshape(noise_rule.count, -1),
            np.full(noise_rule.count, 1.0 / noise_rule.count),
        )
    if model.noise_gaussian and model.noise_cov is not None:
        return nodes_for(noise_rule, np.zeros(model.dim_noise), _noise_cov(model))
    raise RuleUnsupportedForNoise(
        "noise sampling needs Gaussian moments, a sampler with Monte Carlo, "
        "or an explicit sample set"
    )


def update_b(model: OutputModelB, prior_active: GaussianBelief, y, rule) -> UpdateMoments:
    """Update through the explicit additive-noise likelihood.

    The likelihood is the noise density evaluated at the unmixed residual,
    scaled by the inverse Jacobian determinant; the noise distribution may be
    heavy tailed (no moments needed).
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    samples = nodes_for(rule, prior_active.mean, prior_active.cov)
    states = samples.points
    if model.vectorized:
        values = np.asarray(model.func(states), dtype=float).reshape(states.shape[0], -1)
        jmats = _eval_matrix(
            model.noise_input, states, model.dim_output, model.dim_output, True
        )
        dets = np.linalg.det(jmats)
        if np.any(np.abs(dets) < 1e-300):
            raise NonInvertibleNoiseJacobian("singular output-noise matrix at a node")
        resid = np.linalg.solve(jmats, (y[None, :] - values)[..., None])[..., 0]
        dens = np.asarray(model.noise_density(resid), dtype=float).reshape(-1)
        lik = dens / np.abs(dets)
    else:
        lik = np.empty(states.shape[0])
        for i, x in enumerate(states):
            value = np.atleast_1d(np.asarray(model.func(x), dtype=float))
            jmat = np.atleast_2d(np.asarray(model.noise_input(x), dtype=float))
            det = np.linalg.det(jmat)
            if abs(det) < 1e-300:
                raise NonInvertibleNoiseJacobian(f"singular output-noise matrix at node {i}")
            resid = np.linalg.solve(jmat, y - value)
            dens = np.asarray(model.noise_density(resid), dtype=float).reshape(-1)
            lik[i] = float(dens[0]) / abs(det)
    if np.any(lik < 0) or not np.all(np.isfinite(lik)):
        raise ValueError("noise density values must be finite and nonnegative")
    return _self_normalized(states, samples.weights, lik)


def update_c(
    model: OutputModelC,
    prior_full: GaussianBelief,
    split: SubspaceSplit,
    y,
    rule,
) -> UpdateMoments:
    """Update with the conditionally linear output block marginalized out.

    Integration runs over the nonlinear block only. Per node the linear block
    is updated in closed form against the Gaussian node likelihood, and the
    posterior moments of the full [nonlinear; linear] active block are
    accumulated with self-normalized weights.
    """
    dn, dl = model.dim_nonlinear, model.dim_linear
    if split.dim_active != dn + dl:
        raise ValueError("split active rows inconsistent with model dimensions")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    rows_n = split.active[:dn]
    rows_l = split.active[dn:]
    lin_given_non = condition_on_sub(prior_full, given=rows_n, target=rows_l)
    cond_cov = lin_given_non.cov
    prior_n = prior_full.marginal(rows_n)

    samples = nodes_for(rule, prior_n.mean, prior_n.cov)
    pts = samples.points
    count = pts.shape[0]
    m = model.dim_output

    lik = np.empty(count)
    lin_post_mean = np.empty((count, dl))
    lin_post_cov = np.empty((count, dl, dl))
    for i in range(count):
        xn = pts[i]
        cond_mean = lin_given_non.mean_at(xn)
        hval = np.atleast_1d(np.asarray(model.func(xn), dtype=float))
        hmat = np.atleast_2d(np.asarray(model.linear_map(xn), dtype=float))
        jmat = np.atleast_2d(np.asarray(model.noise_input(xn), dtype=float))
        out_mean = hval + hmat @ cond_mean
        out_cov = symmetrize(hmat @ cond_cov @ hmat.T + jmat @ model.noise_cov @ jmat.T)
        factor = chol_factor(out_cov, err=SingularInnovationCov)
        resid = np.linalg.solve(factor, y - out_mean)
        logpdf = (
            -0.5 * float(resid @ resid)
            - float(np.sum(np.log(np.diag(factor))))
            - 0.5 * m * np.log(2.0 * np.pi)
        )
        lik[i] = np.exp(logpdf)
        gain = solve_spd(out_cov, hmat @ cond_cov, err=SingularInnovationCov).T
        lin_post_mean[i] = cond_mean + gain @ (y - out_mean)
        lin_post_cov[i] = (np.eye(dl) - gain @ hmat) @ cond_cov

    lweights = samples.weights * lik
    total = float(lweights.sum())
    if not np.isfinite(total) or total <= DEGENERATE_WEIGHT:
        raise DegenerateUpdate(f"total likelihood weight {total:g}")
    mean_n = lweights @ pts / total
    mean_l = lweights @ lin_post_mean / total
    non_dev = pts - mean_n
    lin_dev = lin_post_mean - mean_l
    cov_nn = (non_dev * lweights[:, None]).T @ non_dev
    cov_nl = (non_dev * lweights[:, None]).T @ lin_dev
    cov_ll = (lin_dev * lweights[:, None]).T @ lin_dev + np.einsum(
        "n,nij->ij", lweights, lin_post_cov
    )
    mean = np.concatenate([mean_n, mean_l])
    cov = np.block([[cov_nn, cov_nl], [cov_nl.T, cov_ll]]) / total
    return UpdateMoments(mean, symmetrize(cov))


def update_d(model: OutputModelD, prior_active: GaussianBelief, y) -> UpdateMoments:
    """Closed-form affine-Gaussian update of the active block."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    hmat = model.state_map
    prior_cov = prior_active.cov
    innovation_cov = symmetrize(
        hmat @ prior_cov @ hmat.T + model.noise_input @ model.noise_cov @ model.noise_input.T
    )
    gain = solve_spd(innovation_cov, hmat @ prior_cov, err=SingularInnovationCov).T
    mean = prior_active.mean + gain @ (y - model.offset - hmat @ prior_active.mean)
    cov = symmetrize(prior_cov - gain @ hmat @ prior_cov)
    return UpdateMoments(mean, cov)


def update_parametric(
    model: OutputModelA, prior_active: GaussianBelief, y, rule
) -> UpdateMoments:
    """Joint-Gaussian (parametric) update through the output moment integrals.

    Approximates the predicted output mean, output covariance and state-output
    cross covariance over joint (state, noise) nodes, then applies the
    standard gain formulas. Requires the output noise to have finite moments.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    samples = _joint_nodes(model, prior_active, rule, noise_first=False)
    beta = prior_active.dim
    states = samples.points[:, :beta]
    noise = samples.points[:, beta:]
    outputs = _eval_pairs(model.func, states, noise, model.vectorized)
    w = samples.weights
    total = w.sum()
    out_mean = w @ outputs / total
    out_dev = outputs - out_mean
    out_cov = symmetrize((out_dev * w[:, None]).T @ out_dev / total)
    cross = ((states - prior_active.mean) * w[:, None]).T @ out_dev / total
    gain = solve_spd(out_cov, cross.T, err=SingularInnovationCov).T
    mean = prior_active.mean + gain @ (y - out_mean)
    cov = symmetrize(prior_active.cov - gain @ cross.T)
    return UpdateMoments(mean, cov)
