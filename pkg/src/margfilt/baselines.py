"""Textbook full-state reference filters for baseline comparison.

Deliberately self-contained: plain dense-matrix Kalman, extended-Kalman and
sigma-point implementations with no dependency on the marginalized machinery,
so scenario runs can report differences against an independent route.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


def _sym(a):
    return 0.5 * (a + a.T)


@dataclass
class LinearSystem:
    """x' = trans @ x + trans_offset + w,  y = obs @ x + obs_offset + v."""

    trans: np.ndarray
    trans_offset: np.ndarray
    process_cov: np.ndarray
    obs: np.ndarray
    obs_offset: np.ndarray
    obs_cov: np.ndarray


def kalman_step(mean, cov, system: LinearSystem, y: Optional[np.ndarray]):
    """One textbook Kalman predict(+update) step; y None skips the update."""
    f, c, q = system.trans, system.trans_offset, system.process_cov
    mean = f @ mean + c
    cov = _sym(f @ cov @ f.T + q)
    predicted = (mean, cov)
    if y is not None:
        h, d, r = system.obs, system.obs_offset, system.obs_cov
        innovation_cov = h @ cov @ h.T + r
        gain = np.linalg.solve(innovation_cov, h @ cov).T
        mean = mean + gain @ (y - d - h @ mean)
        cov = _sym(cov - gain @ h @ cov)
    return predicted, (mean, cov)


@dataclass
class NonlinearSystem:
    """Additive-noise nonlinear system for the EKF / sigma-point baselines."""

    trans: Callable[[np.ndarray], np.ndarray]
    trans_jac: Callable[[np.ndarray], np.ndarray]
    process_cov: np.ndarray
    obs: Callable[[np.ndarray], np.ndarray]
    obs_jac: Callable[[np.ndarray], np.ndarray]
    obs_cov: np.ndarray


def ekf_step(mean, cov, system: NonlinearSystem, y: Optional[np.ndarray]):
    """Extended Kalman step, linearizing at the current/predicted mean."""
    fjac = np.atleast_2d(system.trans_jac(mean))
    mean = np.atleast_1d(np.asarray(system.trans(mean), dtype=float))
    cov = _sym(fjac @ cov @ fjac.T + system.process_cov)
    predicted = (mean, cov)
    if y is not None:
        hjac = np.atleast_2d(system.obs_jac(mean))
        innovation_cov = hjac @ cov @ hjac.T + system.obs_cov
        gain = np.linalg.solve(innovation_cov, hjac @ cov).T
        mean = mean + gain @ (np.atleast_1d(y) - np.atleast_1d(system.obs(mean)))
        cov = _sym(cov - gain @ hjac @ cov)
    return predicted, (mean, cov)


def sigma_points(mean, cov, spread: float):
    """Symmetric 2n+1 sigma points with the common weight parametrization."""
    n = mean.size
    factor = np.linalg.cholesky(cov)
    scale = np.sqrt(n + spread)
    pts = np.empty((2 * n + 1, n))
    pts[0] = mean
    for i in range(n):
        pts[1 + i] = mean + scale * factor[:, i]
        pts[1 + n + i] = mean - scale * factor[:, i]
    weights = np.full(2 * n + 1, 1.0 / (2.0 * (n + spread)))
    weights[0] = spread / (n + spread)
    return pts, weights


def sigma_point_step(mean, cov, system: NonlinearSystem, y, spread: float = 1.0):
    """Unscented-style step for additive-noise systems."""
    pts, w = sigma_points(mean, cov, spread)
    fx = np.stack([np.atleast_1d(system.trans(p)) for p in pts])
    mean = w @ fx
    dev = fx - mean
    cov = _sym((dev * w[:, None]).T @ dev + system.process_cov)
    predicted = (mean, cov)
    if y is not None:
        pts, w = sigma_points(mean, cov, spread)
        hx = np.stack([np.atleast_1d(system.obs(p)) for p in pts])
        ymean = w @ hx
        ydev = hx - ymean
        innovation_cov = (ydev * w[:, None]).T @ ydev + system.obs_cov
        cross = ((pts - mean) * w[:, None]).T @ ydev
        gain = np.linalg.solve(innovation_cov, cross.T).T
        mean = mean + gain @ (np.atleast_1d(y) - ymean)
        cov = _sym(cov - gain @ innovation_cov @ gain.T)
    return predicted, (mean, cov)
