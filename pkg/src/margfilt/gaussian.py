"""Gaussian beliefs, subspace splits, and closed-form Gaussian conditioning.

Everything here is an immutable value; operations are pure functions. All
covariance-producing paths symmetrize their output, and every symmetric solve
goes through a Cholesky factorization with a single diagonal-jitter retry
(failure after the retry raises instead of regularizing further).
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateActiveCov, SingularSplit

# One-shot jitter added to the diagonal of a failing Cholesky: scale times the
# mean diagonal of the matrix.
JITTER_SCALE = 1e-12

# Default ceiling on the condition number of a stacked [active; inactive] matrix.
COND_THRESHOLD = 1e12

_jitter_log: contextvars.ContextVar = contextvars.ContextVar(
    "margfilt_jitter_log", default=None
)


@contextlib.contextmanager
def track_jitter():
    """Count jitter retries performed inside the block.

    Yields a single-element list; element 0 holds the number of solves that
    needed the diagonal jitter. Context-local, safe under concurrency.
    """
    log = [0]
    token = _jitter_log.set(log)
    try:
        yield log
    finally:
        _jitter_log.reset(token)


def _note_jitter():
    log = _jitter_log.get()
    if log is not None:
        log[0] += 1


def symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def chol_factor(mat: np.ndarray, err=DegenerateActiveCov) -> np.ndarray:
    """Lower Cholesky factor with a single jitter retry.

    On the first failure, JITTER_SCALE times the mean diagonal is added once;
    a second failure raises `err`.
    """
    a = np.asarray(mat, dtype=float)
    if a.shape[0] == 0:
        return np.zeros((0, 0))
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_SCALE * float(np.trace(a)) / a.shape[0]
    try:
        factor = np.linalg.cholesky(a + jitter * np.eye(a.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise err(
            f"matrix of shape {a.shape} not positive definite after jitter {jitter:g}"
        ) from exc
    _note_jitter()
    return factor


def solve_spd(mat: np.ndarray, rhs: np.ndarray, err=DegenerateActiveCov) -> np.ndarray:
    """Solve mat @ x = rhs for symmetric positive (semi)definite mat."""
    factor = chol_factor(mat, err)
    rhs = np.asarray(rhs, dtype=float)
    if factor.shape[0] == 0:
        return np.zeros_like(rhs)
    return scipy.linalg.cho_solve((factor, True), rhs)


def _validated_cov(cov: np.ndarray, n: int) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0 and n == 1:
        cov = cov.reshape(1, 1)
    if cov.shape != (n, n):
        raise ValueError(f"covariance shape {cov.shape} does not match dimension {n}")
    if not np.all(np.isfinite(cov)):
        raise ValueError("covariance has non-finite entries")
    scale = float(np.max(np.abs(cov))) if cov.size else 0.0
    if cov.size and float(np.max(np.abs(cov - cov.T))) > 1e-8 * max(scale, 1.0):
        raise ValueError("covariance is not symmetric")
    cov = symmetrize(cov)
    if cov.size:
        eigs = np.linalg.eigvalsh(cov)
        # Relative PSD gate plus an absolute slack so exactly-degenerate
        # covariances (entries at rounding level) still construct.
        bound = -1e-10 * max(eigs[-1], 0.0) - 1e-12 * max(1.0, scale)
        if eigs[0] < bound:
            raise ValueError(
                f"covariance is not positive semidefinite (min eig {eigs[0]:g})"
            )
    return cov


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian state density: mean vector and symmetric PSD covariance.

    The carried prior/posterior of the filter. The covariance is symmetrized
    on construction and gated for positive semidefiniteness.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean has non-finite entries")
        cov = _validated_cov(self.cov, mean.size)
        object.__setattr__(self, "mean", _freeze(mean))
        object.__setattr__(self, "cov", _freeze(cov))

    @property
    def dim(self) -> int:
        return self.mean.size

    def marginal(self, rows: np.ndarray) -> "GaussianBelief":
        """Marginal belief on the subspace rows @ x."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        return GaussianBelief(rows @ self.mean, symmetrize(rows @ self.cov @ rows.T))


@dataclass(frozen=True)
class SubspaceSplit:
    """Active/inactive row matrices with the cached inverse column blocks.

    `[active; inactive]` stacked is invertible and `[inv_active inv_inactive]`
    is its matrix inverse, so `active @ inv_active = I`,
    `inactive @ inv_inactive = I` and the two cross products vanish.
    """

    active: np.ndarray        # (a, n)
    inactive: np.ndarray      # (n-a, n)
    inv_active: np.ndarray    # (n, a)
    inv_inactive: np.ndarray  # (n, n-a)

    def __post_init__(self):
        for name in ("active", "inactive", "inv_active", "inv_inactive"):
            object.__setattr__(self, name, _freeze(np.atleast_2d(getattr(self, name))))

    @property
    def dim(self) -> int:
        return self.active.shape[1]

    @property
    def dim_active(self) -> int:
        return self.active.shape[0]

    def active_belief(self, belief: GaussianBelief) -> GaussianBelief:
        return belief.marginal(self.active)


@dataclass(frozen=True)
class ConditionalGaussian:
    """Affine-Gaussian conditional: mean(given) = base_mean + gain (given - ref_mean).

    The covariance is constant in the conditioning value.
    """

    base_mean: np.ndarray
    gain: np.ndarray
    cov: np.ndarray
    ref_mean: np.ndarray

    def __post_init__(self):
        base = np.atleast_1d(np.asarray(self.base_mean, dtype=float))
        ref = np.atleast_1d(np.asarray(self.ref_mean, dtype=float))
        gain = np.atleast_2d(np.asarray(self.gain, dtype=float))
        if gain.shape != (base.size, ref.size):
            raise ValueError("gain shape inconsistent with base/ref means")
        cov = _validated_cov(self.cov, base.size)
        object.__setattr__(self, "base_mean", _freeze(base))
        object.__setattr__(self, "ref_mean", _freeze(ref))
        object.__setattr__(self, "gain", _freeze(gain))
        object.__setattr__(self, "cov", _freeze(cov))

    def mean_at(self, given: np.ndarray) -> np.ndarray:
        return self.base_mean + self.gain @ (np.asarray(given, dtype=float) - self.ref_mean)


def make_split(active, inactive, cond_threshold: float = COND_THRESHOLD) -> SubspaceSplit:
    """Build a SubspaceSplit from complementary row blocks.

    Raises SingularSplit when the stacked matrix is singular or its condition
    number exceeds `cond_threshold`. Zero-row blocks are legal on either side.
    """
    active = np.atleast_2d(np.asarray(active, dtype=float))
    inactive = np.atleast_2d(np.asarray(inactive, dtype=float))
    if active.size == 0 and active.shape[0] != 0:
        active = active.reshape(0, inactive.shape[1])
    if inactive.size == 0 and inactive.shape[0] != 0:
        inactive = inactive.reshape(0, active.shape[1])
    stack = np.vstack([active, inactive])
    n = stack.shape[1]
    if stack.shape[0] != n:
        raise SingularSplit(
            f"stacked split is {stack.shape[0]}x{n}, expected square"
        )
    cond = np.linalg.cond(stack) if n else 1.0
    if not np.isfinite(cond) or cond > cond_threshold:
        raise SingularSplit(f"stacked split condition number {cond:g} exceeds {cond_threshold:g}")
    inv = np.linalg.inv(stack)
    a = active.shape[0]
    return SubspaceSplit(active, inactive, inv[:, :a], inv[:, a:])


def inactive_gain(belief: GaussianBelief, split: SubspaceSplit) -> np.ndarray:
    """Cross-covariance regression of the inactive block on the active block.

    Returns the (n-a, a) matrix
    `inactive P activeᵀ (active P activeᵀ)⁻¹`; the prediction and update
    assemblies use it to carry active-subspace information into the complement.
    """
    act, inact = split.active, split.inactive
    active_cov = symmetrize(act @ belief.cov @ act.T)
    cross = inact @ belief.cov @ act.T
    return solve_spd(active_cov, cross.T, err=DegenerateActiveCov).T


def condition_on_sub(belief: GaussianBelief, given, target) -> ConditionalGaussian:
    """Condition target @ x on given @ x under the belief's joint Gaussian."""
    given = np.atleast_2d(np.asarray(given, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    p = belief.cov
    given_cov = symmetrize(given @ p @ given.T)
    cross = target @ p @ given.T
    gain = solve_spd(given_cov, cross.T, err=DegenerateActiveCov).T
    cov = symmetrize(target @ p @ target.T - gain @ cross.T)
    return ConditionalGaussian(
        base_mean=target @ belief.mean,
        gain=gain,
        cov=cov,
        ref_mean=given @ belief.mean,
    )
