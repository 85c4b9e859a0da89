"""Numerical moment-integral backends.

Every rule maps a Gaussian (mean, cov) to a common currency, a weighted sample
set; the generic estimator is then the weight-normalized average of the
integrand over the nodes. Importance sampling is expressed by passing a
caller-built WeightedSampleSet wherever a rule is accepted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import (
    DegenerateActiveCov,
    DimensionTooLarge,
    ZeroBandwidth,
    ZeroTotalWeight,
)
from .gaussian import chol_factor

DEGENERATE_WEIGHT = 1e-300


@dataclass(frozen=True)
class WeightedSampleSet:
    """Integration nodes with nonnegative weights."""

    points: np.ndarray   # (count, dim)
    weights: np.ndarray  # (count,)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        wts = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if pts.shape[0] != wts.size:
            raise ValueError("points and weights lengths differ")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(wts)):
            raise ValueError("non-finite nodes or weights")
        if np.any(wts < 0):
            raise ValueError("weights must be nonnegative")
        if wts.sum() <= 0:
            raise ValueError("total weight must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class GaussHermiteRule:
    """Tensor-grid Gauss-Hermite rule, `degree` nodes per dimension."""

    degree: int = 5
    node_budget: int = 1_000_000

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")


@dataclass(frozen=True)
class UnscentedRule:
    """Symmetric sigma-point rule with 2d+1 nodes and spread parameter."""

    spread: float = 1.0

    def __post_init__(self):
        if self.spread < 0:
            raise ValueError("spread must be >= 0 to keep weights nonnegative")


@dataclass(frozen=True)
class MonteCarloRule:
    """Seeded Monte Carlo draws; same (seed, count, dim) gives the same nodes."""

    count: int
    seed: int = 0

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("count must be >= 2")

    def reseeded(self, seed: int) -> "MonteCarloRule":
        return MonteCarloRule(self.count, int(seed))


IntegrationRule = Union[GaussHermiteRule, UnscentedRule, MonteCarloRule]


def mc_generator(seed: int) -> np.random.Generator:
    """Counter-based generator backing every Monte Carlo draw in the library."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


def gauss_hermite_1d(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and probability weights exact for N(0,1) moments up to order 2*degree-1."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(degree)
    return nodes, weights / weights.sum()


def gh_node_count(degree: int, dim: int) -> int:
    return degree ** dim if dim > 0 else 1

def _transform(z: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    factor = chol_factor(cov, err=DegenerateActiveCov)
    return mean[None, :] + z @ factor.T


def nodes_for(rule, mean, cov) -> WeightedSampleSet:
    """Generate integration nodes for a Gaussian with the given mean and cov.

    A WeightedSampleSet passes through unchanged (caller-supplied importance
    nodes), subject only to a dimension check.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = mean.size
    if isinstance(rule, WeightedSampleSet):
        if rule.dim != d:
            raise ValueError(f"supplied sample set has dim {rule.dim}, expected {d}")
        return rule
    if isinstance(rule, GaussHermiteRule):
        if gh_node_count(rule.degree, d) > rule.node_budget:
            raise DimensionTooLarge(
                f"Gauss-Hermite grid {rule.degree}^{d} exceeds budget {rule.node_budget}"
            )
        nodes1, weights1 = gauss_hermite_1d(rule.degree)
        if d == 0:
            return WeightedSampleSet(np.zeros((1, 0)), np.ones(1))
        grids = np.meshgrid(*([nodes1] * d), indexing="ij")
        z = np.stack([g.reshape(-1) for g in grids], axis=1)
        wgrids = np.meshgrid(*([weights1] * d), indexing="ij")
        weights = np.ones(z.shape[0])
        for g in wgrids:
            weights = weights * g.reshape(-1)
        return WeightedSampleSet(_transform(z, mean, cov), weights)
    if isinstance(rule, UnscentedRule):
        if d == 0:
            return WeightedSampleSet(np.zeros((1, 0)), np.ones(1))
        factor = chol_factor(cov, err=DegenerateActiveCov)
        scale = np.sqrt(d + rule.spread)
        pts = np.empty((2 * d + 1, d))
        pts[0] = mean
        for i in range(d):
            pts[1 + i] = mean + scale * factor[:, i]
            pts[1 + d + i] = mean - scale * factor[:, i]
        weights = np.full(2 * d + 1, 1.0 / (2.0 * (d + rule.spread)))
        weights[0] = rule.spread / (d + rule.spread)
        return WeightedSampleSet(pts, weights)
    if isinstance(rule, MonteCarloRule):
        rng = mc_generator(rule.seed)
        z = rng.standard_normal((rule.count, d))
        return WeightedSampleSet(
            _transform(z, mean, cov), np.full(rule.count, 1.0 / rule.count)
        )
    raise TypeError(f"unknown integration rule {type(rule).__name__}")


def estimate(func: Callable[[np.ndarray], np.ndarray], samples: WeightedSampleSet):
    """Weight-normalized average of func over the nodes."""
    total = float(samples.weights.sum())
    if total <= DEGENERATE_WEIGHT:
        raise ZeroTotalWeight(f"total weight {total:g}")
    values = np.stack(
        [np.asarray(func(p), dtype=float) for p in samples.points]
    )
    return np.tensordot(samples.weights, values, axes=(0, 0)) / total


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian-kernel density estimation configuration.

    bandwidth is either the string "silverman" (weighted rule of thumb,
    diagonal bandwidth) or a fixed SPD bandwidth matrix.
    """

    bandwidth: Union[str, np.ndarray] = "silverman"

    def __post_init__(self):
        bw = self.bandwidth
        if isinstance(bw, str):
            if bw != "silverman":
                raise ValueError(f"unknown bandwidth rule {bw!r}")
            return
        bw = np.atleast_2d(np.asarray(bw, dtype=float))
        if bw.shape[0] != bw.shape[1] or np.max(np.abs(bw - bw.T)) > 1e-12 * max(
            1.0, float(np.max(np.abs(bw)))
        ):
            raise ZeroBandwidth("fixed bandwidth matrix must be symmetric")
        try:
            np.linalg.cholesky(bw)
        except np.linalg.LinAlgError as exc:
            raise ZeroBandwidth("fixed bandwidth matrix must be positive definite") from exc
        object.__setattr__(self, "bandwidth", bw)


def silverman_bandwidth(outputs: np.ndarray, weights: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Diagonal bandwidth matrix from the weighted rule of thumb.

    Per output dimension j the root bandwidth is
    sigma_j * (4 / ((m + 2) * n_eff))^(1 / (m + 4)) with the weighted standard
    deviation sigma and effective sample size n_eff = (sum w)^2 / sum w^2.
    Dimensions with zero spread are floored at 1e-9 * (1 + |y_j|).
    """
    m = outputs.shape[1]
    total = weights.sum()
    mean = weights @ outputs / total
    var = weights @ (outputs - mean) ** 2 / total
    n_eff = total**2 / float(weights @ weights)
    root = np.sqrt(var) * (4.0 / ((m + 2.0) * n_eff)) ** (1.0 / (m + 4.0))
    floor = 1e-9 * (1.0 + np.abs(y))
    root = np.maximum(root, floor)
    return np.diag(root**2)


def gaussian_kernel_values(diffs: np.ndarray, bandwidth: np.ndarray) -> np.ndarray:
    """Gaussian kernel density values N(diff; 0, bandwidth) for each row."""
    m = diffs.shape[1]
    factor = chol_factor(bandwidth, err=ZeroBandwidth)
    sol = np.linalg.solve(factor, diffs.T)
    qform = np.sum(sol**2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(factor)))
    lognorm = -0.5 * (m * np.log(2.0 * np.pi) + logdet)
    return np.exp(lognorm - 0.5 * qform)


def kde_likelihood_at(
    node: np.ndarray,
    y: np.ndarray,
    output_model,
    config: KernelConfig,
    noise_samples: WeightedSampleSet,
) -> float:
    """Kernel density estimate of the likelihood of y at one integration node.

    Replaces the inner Dirac integral over the output noise with a
    weight-normalized sum of Gaussian kernel values at y minus the propagated
    noise samples. The returned value is an unnormalized likelihood.
    """
    node = np.atleast_1d(np.asarray(node, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    weights = noise_samples.weights
    total = float(weights.sum())
    if total <= DEGENERATE_WEIGHT:
        raise ZeroTotalWeight("noise sample weights sum to zero")
    outs = _eval_output(output_model, node, noise_samples.points)
    if isinstance(config.bandwidth, str):
        bandwidth = silverman_bandwidth(outs, weights, y)
    else:
        bandwidth = config.bandwidth
    kernel = gaussian_kernel_values(y[None, :] - outs, bandwidth)
    return float(weights @ kernel / total)


def _eval_output(model, node: np.ndarray, noise: np.ndarray) -> np.ndarray:
    if getattr(model, "vectorized", False):
        tiled = np.broadcast_to(node, (noise.shape[0], node.size))
        out = np.asarray(model.func(tiled, noise), dtype=float)
        return out.reshape(noise.shape[0], -1)
    rows = [np.atleast_1d(np.asarray(model.func(node, v), dtype=float)) for v in noise]
    return np.stack(rows)
