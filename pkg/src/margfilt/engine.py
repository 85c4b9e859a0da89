"""Assembly of marginal moments into full-state beliefs, and the step driver.

The inactive subspace never integrates: its mean and covariance pass through
prediction unchanged and its update is the closed-form regression on the
active block through the cross-covariance gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegenerateUpdate
from .gaussian import (
    GaussianBelief,
    SubspaceSplit,
    inactive_gain,
    symmetrize,
    track_jitter,
)
from .moments import (
    PredictionMoments,
    UpdateMoments,
    predict_a,
    predict_b,
    predict_c,
    predict_d,
    update_a_kde,
    update_b,
    update_c,
    update_d,
    update_likelihood,
    update_parametric,
)
from .quadrature import (
    GaussHermiteRule,
    KernelConfig,
    MonteCarloRule,
    UnscentedRule,
    WeightedSampleSet,
    gh_node_count,
)

PREDICT_LEVELS = ("a", "b", "c", "d")
UPDATE_LEVELS = ("a-kde", "a-likelihood", "a-parametric", "b", "c", "d")


class BoundModel(NamedTuple):
    """A model together with the subspace split binding it to the system state."""

    model: object
    split: SubspaceSplit


@dataclass(frozen=True)
class StepConfig:
    """Per-step dispatch configuration: levels, rules and degenerate policy."""

    predict_level: str = "d"
    update_level: str = "d"
    predict_rule: object = field(default_factory=GaussHermiteRule)
    update_rule: object = field(default_factory=GaussHermiteRule)
    noise_rule: Optional[object] = None
    kernel: KernelConfig = field(default_factory=KernelConfig)
    on_degenerate: str = "keep-prior"
    mc_fallback_count: int = 10_000

    def __post_init__(self):
        if self.predict_level not in PREDICT_LEVELS:
            raise ValueError(f"unknown predict level {self.predict_level!r}")
        if self.update_level not in UPDATE_LEVELS:
            raise ValueError(f"unknown update level {self.update_level!r}")
        if self.on_degenerate not in ("error", "keep-prior"):
            raise ValueError("on_degenerate must be 'error' or 'keep-prior'")


@dataclass(frozen=True)
class StepFlags:
    """Auditable per-step events."""

    jitter_applied: bool = False
    mc_fallback: bool = False
    degenerate_update_skipped: bool = False


@dataclass(frozen=True)
class StepReport:
    """Everything one step produced: beliefs, moments, node counts and flags."""

    predicted: GaussianBelief
    updated: GaussianBelief
    prediction_moments: PredictionMoments
    update_moments: Optional[UpdateMoments]
    predict_nodes: int
    update_nodes: int
    flags: StepFlags


def assemble_prediction(
    prior: GaussianBelief, split: SubspaceSplit, moments: PredictionMoments
) -> GaussianBelief:
    """Lift predicted active moments to a full-state belief.

    The inactive block keeps the prior moments; the cross block is carried by
    the inactive-on-active regression gain of the prior.
    """
    fwd, cmp_ = split.inv_active, split.inv_inactive
    inact = split.inactive
    gain = inactive_gain(prior, split)
    mean = fwd @ moments.active_mean + cmp_ @ (inact @ prior.mean)
    inact_cov = inact @ prior.cov @ inact.T
    coupling = fwd @ moments.cross_cov @ gain.T @ cmp_.T
    cov = (
        fwd @ moments.active_cov @ fwd.T
        + cmp_ @ inact_cov @ cmp_.T
        + coupling
        + coupling.T
    )
    return GaussianBelief(mean, symmetrize(cov))


def assemble_update(
    prior: GaussianBelief, split: SubspaceSplit, moments: UpdateMoments
) -> GaussianBelief:
    """Lift posterior active moments to a full-state belief.

    The complement block is updated through the regression gain: its posterior
    mean moves by gain times the active-mean innovation and its covariance is
    the conditional covariance plus the regressed posterior activity.
    """
    fwd, cmp_ = split.inv_active, split.inv_inactive
    act, inact = split.active, split.inactive
    gain = inactive_gain(prior, split)
    act_prior_mean = act @ prior.mean
    mean = fwd @ moments.active_mean + cmp_ @ (
        inact @ prior.mean + gain @ (moments.active_mean - act_prior_mean)
    )
    inact_block = (
        inact @ prior.cov @ inact.T
        - gain @ (act @ prior.cov @ inact.T)
        + gain @ moments.active_cov @ gain.T
    )
    coupling = fwd @ moments.active_cov @ gain.T @ cmp_.T
    cov = fwd @ moments.active_cov @ fwd.T + cmp_ @ inact_block @ cmp_.T + coupling + coupling.T
    return GaussianBelief(mean, symmetrize(cov))


def _phase_seed(seed: Optional[int], phase: int) -> Optional[int]:
    if seed is None:
        return None
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(phase,))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _resolve_rule(rule, dim: int, seed: Optional[int], config: StepConfig):
    """Reseed Monte Carlo rules per phase; swap oversized tensor grids for MC.

    Returns (rule, mc_fallback_flag).
    """
    if isinstance(rule, MonteCarloRule):
        return (rule if seed is None else rule.reseeded(seed)), False
    if isinstance(rule, GaussHermiteRule) and gh_node_count(rule.degree, dim) > rule.node_budget:
        fallback = MonteCarloRule(config.mc_fallback_count, seed if seed is not None else 0)
        return fallback, True
    return rule, False


def _node_count(rule, dim: int) -> int:
    if isinstance(rule, GaussHermiteRule):
        return gh_node_count(rule.degree, dim)
    if isinstance(rule, UnscentedRule):
        return 2 * dim + 1
    if isinstance(rule, MonteCarloRule):
        return rule.count
    if isinstance(rule, WeightedSampleSet):
        return rule.count
    return 0


def _predict(belief, bound: BoundModel, config: StepConfig, seed):
    model, split = bound
    level = config.predict_level
    if level == "d":
        moments = predict_d(model, split.active_belief(belief))
        return moments, split, 0, False
    if level == "c":
        dim = model.dim_nonlinear
    elif level == "b":
        dim = split.dim_active
    else:
        dim = split.dim_active + model.dim_noise
    rule, fell_back = _resolve_rule(config.predict_rule, dim, seed, config)
    if level == "c":
        moments = predict_c(model, belief, split, rule)
    elif level == "b":
        moments = predict_b(model, split.active_belief(belief), rule)
    else:
        moments = predict_a(model, split.active_belief(belief), rule)
    return moments, split, _node_count(rule, dim), fell_back


def _update(predicted, bound: BoundModel, y, config: StepConfig, seed):
    model, split = bound
    level = config.update_level
    if level == "d":
        moments = update_d(model, split.active_belief(predicted), y)
        return moments, 0, False
    if level == "c":
        dim = model.dim_nonlinear
    elif level == "a-parametric":
        dim = split.dim_active + model.dim_noise
    else:
        dim = split.dim_active
    rule, fell_back = _resolve_rule(config.update_rule, dim, seed, config)
    if level == "c":
        moments = update_c(model, predicted, split, y, rule)
    elif level == "b":
        moments = update_b(model, split.active_belief(predicted), y, rule)
    elif level == "a-parametric":
        moments = update_parametric(model, split.active_belief(predicted), y, rule)
    elif level == "a-kde":
        noise_rule = config.noise_rule
        if noise_rule is None:
            raise ValueError("a-kde update needs a noise_rule in the step config")
        if isinstance(noise_rule, MonteCarloRule) and seed is not None:
            noise_rule = noise_rule.reseeded(_phase_seed(seed, 2))
        moments = update_a_kde(
            model, split.active_belief(predicted), y, rule, config.kernel, noise_rule
        )
    else:  # a-likelihood
        if model.likelihood is None:
            raise ValueError("a-likelihood update needs a model with a likelihood callable")
        moments = update_likelihood(
            model.likelihood,
            split.active_belief(predicted),
            y,
            rule,
            vectorized=model.vectorized,
        )
    return moments, _node_count(rule, dim), fell_back


def step(
    belief: GaussianBelief,
    transition: BoundModel,
    output: Optional[BoundModel],
    y,
    config: StepConfig,
    seed: Optional[int] = None,
) -> StepReport:
    """One predict-then-update recursion step.

    y may be None for a predict-only step. The degenerate-update policy is
    applied here: 'keep-prior' returns the predicted belief with a flag,
    'error' propagates the exception.
    """
    with track_jitter() as jitter_log:
        pred_moments, tsplit, pred_nodes, pred_fallback = _predict(
            belief, transition, config, _phase_seed(seed, 0)
        )
        predicted = assemble_prediction(belief, tsplit, pred_moments)
        upd_moments = None
        upd_nodes = 0
        upd_fallback = False
        degenerate = False
        if y is None:
            updated = predicted
        else:
            if output is None:
                raise ValueError("measurement supplied but no output model bound")
            try:
                upd_moments, upd_nodes, upd_fallback = _update(
                    predicted, output, y, config, _phase_seed(seed, 1)
                )
                updated = assemble_update(predicted, output.split, upd_moments)
            except DegenerateUpdate:
                if config.on_degenerate == "error":
                    raise
                updated = predicted
                degenerate = True
    flags = StepFlags(
        jitter_applied=jitter_log[0] > 0,
        mc_fallback=pred_fallback or upd_fallback,
        degenerate_update_skipped=degenerate,
    )
    return StepReport(
        predicted=predicted,
        updated=updated,
        prediction_moments=pred_moments,
        update_moments=upd_moments,
        predict_nodes=pred_nodes,
        update_nodes=upd_nodes,
        flags=flags,
    )
