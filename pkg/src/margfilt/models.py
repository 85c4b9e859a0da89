"""Transition and output models at four nested structural levels.

Level conventions (least to most constrained structure):

* level a - fully general: a callable of (active state, noise vector).
* level b - conditionally additive noise: value plus a state-dependent noise
  input matrix; output noise enters through an invertible square matrix so the
  likelihood stays explicit even when the noise has no moments.
* level c - a conditionally linear-Gaussian block inside the active subspace;
  the active rows are ordered [nonlinear; linear] and all matrices are
  callables of the nonlinear part only.
* level d - affine with additive Gaussian noise; everything closed form.

The lowering adapters turn a richer model into a cheaper level by freezing the
noise (and optionally part of the state) at a linearization point. Numeric
Jacobians are central differences with a per-coordinate step scaled by the
magnitude of the point; analytic Jacobian callables take precedence when a
model supplies them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BadPartition, NonInvertibleNoiseJacobian
from .gaussian import GaussianBelief

DEFAULT_JACOBIAN_STEP = 1e-6


def _as_vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


def central_jacobian(func, point, step_scale: float = DEFAULT_JACOBIAN_STEP) -> np.ndarray:
    """Central-difference Jacobian of func at point, step 'scale*(1+|p_i|)' per coordinate."""
    point = _as_vec(point)
    cols = []
    for i in range(point.size):
        h = step_scale * (1.0 + abs(point[i]))
        up = point.copy()
        dn = point.copy()
        up[i] += h
        dn[i] -= h
        cols.append((_as_vec(func(up)) - _as_vec(func(dn))) / (2.0 * h))
    if not cols:
        probe = _as_vec(func(point))
        return np.zeros((probe.size, 0))
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class TransitionModelA:
    """General transition of the active block: next = func(active, noise).

    noise_sampler(rng, count) draws noise rows deterministically from the
    generator; noise_mean/noise_cov are the optional first two moments (mean
    is zero by convention). Set noise_gaussian=False for non-Gaussian noise,
    which restricts the usable rules to sample-based ones.
    """

    dim_active: int
    dim_noise: int
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    noise_sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    noise_cov: Optional[np.ndarray] = None
    noise_gaussian: bool = True
    jac_state: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jac_noise: Optional[Callable[[np.ndarray], np.ndarray]] = None
    vectorized: bool = False


@dataclass(frozen=True)
class OutputModelA:
    """General output model: y = func(active, noise).

    likelihood(y, active), when given, is the likelihood known up to scale.
    noise_density(v), when given, is the noise pdf (used when lowering to
    level b).
    """

    dim_active: int
    dim_noise: int
    dim_output: int
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    noise_sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    noise_cov: Optional[np.ndarray] = None
    noise_gaussian: bool = True
    likelihood: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    noise_density: Optional[Callable[[np.ndarray], float]] = None
    jac_state: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jac_noise: Optional[Callable[[np.ndarray], np.ndarray]] = None
    vectorized: bool = False


@dataclass(frozen=True)
class TransitionModelB:
    """Additive-noise transition: next = func(active) + noise_input(active) @ w."""

    dim_active: int
    dim_noise: int
    func: Callable[[np.ndarray], np.ndarray]
    noise_input: Callable[[np.ndarray], np.ndarray]
    noise_cov: np.ndarray
    vectorized: bool = False

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        if cov.shape != (self.dim_noise, self.dim_noise):
            raise ValueError("noise_cov shape inconsistent with dim_noise")
        object.__setattr__(self, "noise_cov", cov)


@dataclass(frozen=True)
class OutputModelB:
    """Additive-noise output: y = func(active) + noise_input(active) @ v.

    noise_input values must be invertible m x m matrices; noise_density is the
    pdf of v (its moments may be undefined, e.g. heavy tails).
    """

    dim_active: int
    dim_output: int
    func: Callable[[np.ndarray], np.ndarray]
    noise_input: Callable[[np.ndarray], np.ndarray]
    noise_density: Callable[[np.ndarray], float]
    vectorized: bool = False


@dataclass(frozen=True)
class TransitionModelC:
    """Conditionally linear-Gaussian transition on active rows [nonlinear; linear].

    next_active = func(xn) + linear_map(xn) @ xl + noise_input(xn) @ w with
    Gaussian w. xn/xl are the nonlinear/linear parts of the active block.
    """

    dim_nonlinear: int
    dim_linear: int
    dim_noise: int
    func: Callable[[np.ndarray], np.ndarray]
    linear_map: Callable[[np.ndarray], np.ndarray]
    noise_input: Callable[[np.ndarray], np.ndarray]
    noise_cov: np.ndarray

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        if cov.shape != (self.dim_noise, self.dim_noise):
            raise ValueError("noise_cov shape inconsistent with dim_noise")
        object.__setattr__(self, "noise_cov", cov)

    @property
    def dim_active(self) -> int:
        return self.dim_nonlinear + self.dim_linear


@dataclass(frozen=True)
class OutputModelC:
    """Conditionally linear-Gaussian output on active rows [nonlinear; linear]."""

    dim_nonlinear: int
    dim_linear: int
    dim_output: int
    func: Callable[[np.ndarray], np.ndarray]
    linear_map: Callable[[np.ndarray], np.ndarray]
    noise_input: Callable[[np.ndarray], np.ndarray]
    noise_cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "noise_cov", np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        )

    @property
    def dim_active(self) -> int:
        return self.dim_nonlinear + self.dim_linear


@dataclass(frozen=True)
class TransitionModelD:
    """Affine-Gaussian transition: next = offset + state_map @ active + noise_input @ w."""

    offset: np.ndarray
    state_map: np.ndarray
    noise_input: np.ndarray
    noise_cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offset", _as_vec(self.offset))
        object.__setattr__(self, "state_map", np.atleast_2d(np.asarray(self.state_map, float)))
        object.__setattr__(self, "noise_input", np.atleast_2d(np.asarray(self.noise_input, float)))
        object.__setattr__(self, "noise_cov", np.atleast_2d(np.asarray(self.noise_cov, float)))
        a = self.offset.size
        if self.state_map.shape != (a, a):
            raise ValueError("state_map shape inconsistent with offset")
        if self.noise_input.shape[0] != a:
            raise ValueError("noise_input rows inconsistent with offset")
        if self.noise_cov.shape != (self.noise_input.shape[1],) * 2:
            raise ValueError("noise_cov shape inconsistent with noise_input")

    @property
    def dim_active(self) -> int:
        return self.offset.size


@dataclass(frozen=True)
class OutputModelD:
    """Affine-Gaussian output: y = offset + state_map @ active + noise_input @ v."""

    offset: np.ndarray
    state_map: np.ndarray
    noise_input: np.ndarray
    noise_cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offset", _as_vec(self.offset))
        object.__setattr__(self, "state_map", np.atleast_2d(np.asarray(self.state_map, float)))
        object.__setattr__(self, "noise_input", np.atleast_2d(np.asarray(self.noise_input, float)))
        object.__setattr__(self, "noise_cov", np.atleast_2d(np.asarray(self.noise_cov, float)))
        m = self.offset.size
        if self.state_map.shape[0] != m or self.noise_input.shape != (m, m):
            raise ValueError("output matrices inconsistent with offset dimension")

    @property
    def dim_output(self) -> int:
        return self.offset.size

    @property
    def dim_active(self) -> int:
        return self.state_map.shape[1]


def _gaussian_density(cov: np.ndarray) -> Callable[[np.ndarray], float]:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    m = cov.shape[0]
    factor = np.linalg.cholesky(cov)
    lognorm = -0.5 * (m * np.log(2.0 * np.pi)) - np.sum(np.log(np.diag(factor)))

    def density(v):
        sol = np.linalg.solve(factor, _as_vec(v))
        return float(np.exp(lognorm - 0.5 * sol @ sol))

    return density


def lower_to_b(model, jacobian_step: float = DEFAULT_JACOBIAN_STEP):
    """Freeze the noise argument at zero: value at zero noise plus noise Jacobian.

    Transition models lower to TransitionModelB, output models to OutputModelB.
    The output lowering raises NonInvertibleNoiseJacobian lazily at any point
    where the square noise Jacobian is singular.
    """
    if isinstance(model, TransitionModelA):
        if model.noise_cov is None:
            raise ValueError("level-b transition requires a noise covariance")
        zero = np.zeros(model.dim_noise)

        def value(x):
            return _as_vec(model.func(x, zero))

        if model.jac_noise is not None:
            noise_input = lambda x: np.atleast_2d(np.asarray(model.jac_noise(x), float))
        else:
            noise_input = lambda x: central_jacobian(
                lambda w: model.func(x, w), zero, jacobian_step
            )
        return TransitionModelB(
            dim_active=model.dim_active,
            dim_noise=model.dim_noise,
            func=value,
            noise_input=noise_input,
            noise_cov=np.atleast_2d(np.asarray(model.noise_cov, float)),
        )
    if isinstance(model, OutputModelA):
        if model.dim_noise != model.dim_output:
            raise ValueError("level-b output lowering needs square noise Jacobians")
        zero = np.zeros(model.dim_noise)

        def hvalue(x):
            return _as_vec(model.func(x, zero))

        if model.jac_noise is not None:
            raw = lambda x: np.atleast_2d(np.asarray(model.jac_noise(x), float))
        else:
            raw = lambda x: central_jacobian(lambda v: model.func(x, v), zero, jacobian_step)

        def noise_input(x):
            jac = raw(x)
            if abs(np.linalg.det(jac)) < 1e-300:
                raise NonInvertibleNoiseJacobian(f"singular noise Jacobian at {x!r}")
            return jac

        if model.noise_density is not None:
            density = model.noise_density
        elif model.noise_gaussian and model.noise_cov is not None:
            density = _gaussian_density(model.noise_cov)
        else:
            raise ValueError("output lowering needs a noise density or Gaussian moments")
        return OutputModelB(
            dim_active=model.dim_active,
            dim_output=model.dim_output,
            func=hvalue,
            noise_input=noise_input,
            noise_density=density,
        )
    raise TypeError(f"cannot lower {type(model).__name__} to level b")


def _check_partition(nonlinear: Sequence[int], linear: Sequence[int], dim: int):
    seen = list(nonlinear) + list(linear)
    if sorted(seen) != list(range(dim)):
        raise BadPartition(
            f"nonlinear {list(nonlinear)} + linear {list(linear)} must cover 0..{dim - 1} exactly once"
        )


def lower_to_c(
    model,
    lin_point,
    nonlinear_rows: Sequence[int],
    linear_rows: Sequence[int],
    jacobian_step: float = DEFAULT_JACOBIAN_STEP,
):
    """Linearize the chosen active rows around lin_point, keep the rest nonlinear.

    Accepts level-a or level-b models. The returned level-c model orders its
    active block as [nonlinear rows; linear rows] of the source active block;
    build the matching subspace split by stacking the active rows in that
    order. Exact where the source is affine in the linearized block and the
    noise; first order elsewhere.
    """
    if not isinstance(model, (TransitionModelA, TransitionModelB, OutputModelA)):
        raise TypeError(f"cannot lower {type(model).__name__} to level c")
    nonlinear_rows = list(nonlinear_rows)
    linear_rows = list(linear_rows)
    _check_partition(nonlinear_rows, linear_rows, model.dim_active)
    lin_point = np.asarray(lin_point, dtype=float).reshape(-1)
    if lin_point.size != len(linear_rows):
        raise ValueError("lin_point dimension must equal the number of linear rows")
    order = nonlinear_rows + linear_rows

    def assemble(xn):
        z = np.empty(len(order))
        z[nonlinear_rows] = _as_vec(xn)
        z[linear_rows] = lin_point
        return z

    if isinstance(model, TransitionModelA):
        if model.noise_cov is None:
            raise ValueError("level-c transition requires a noise covariance")
        zero = np.zeros(model.dim_noise)
        base = lambda z: _as_vec(model.func(z, zero))
        if model.jac_state is not None:
            state_jac = lambda z: np.atleast_2d(np.asarray(model.jac_state(z), float))
        else:
            state_jac = lambda z: central_jacobian(base, z, jacobian_step)
        if model.jac_noise is not None:
            noise_jac = lambda z: np.atleast_2d(np.asarray(model.jac_noise(z), float))
        else:
            noise_jac = lambda z: central_jacobian(
                lambda w: model.func(z, w), zero, jacobian_step
            )

        def linear_map(xn):
            return state_jac(assemble(xn))[np.ix_(order, linear_rows)]

        def noise_input(xn):
            return noise_jac(assemble(xn))[order]

        def value(xn):
            z = assemble(xn)
            return base(z)[order] - state_jac(z)[np.ix_(order, linear_rows)] @ lin_point

        return TransitionModelC(
            dim_nonlinear=len(nonlinear_rows),
            dim_linear=len(linear_rows),
            dim_noise=model.dim_noise,
            func=value,
            linear_map=linear_map,
            noise_input=noise_input,
            noise_cov=np.atleast_2d(np.asarray(model.noise_cov, float)),
        )
    if isinstance(model, TransitionModelB):
        base = lambda z: _as_vec(model.func(z))
        state_jac = lambda z: central_jacobian(base, z, jacobian_step)

        def linear_map(xn):
            return state_jac(assemble(xn))[np.ix_(order, linear_rows)]

        def noise_input(xn):
            return np.atleast_2d(np.asarray(model.noise_input(assemble(xn)), float))[order]

        def value(xn):
            z = assemble(xn)
            return base(z)[order] - state_jac(z)[np.ix_(order, linear_rows)] @ lin_point

        return TransitionModelC(
            dim_nonlinear=len(nonlinear_rows),
            dim_linear=len(linear_rows),
            dim_noise=model.dim_noise,
            func=value,
            linear_map=linear_map,
            noise_input=noise_input,
            noise_cov=np.atleast_2d(np.asarray(model.noise_cov, float)),
        )
    if isinstance(model, OutputModelA):
        if not model.noise_gaussian or model.noise_cov is None:
            raise ValueError("level-c output requires Gaussian noise moments")
        zero = np.zeros(model.dim_noise)
        base = lambda z: _as_vec(model.func(z, zero))
        if model.jac_state is not None:
            state_jac = lambda z: np.atleast_2d(np.asarray(model.jac_state(z), float))
        else:
            state_jac = lambda z: central_jacobian(base, z, jacobian_step)
        if model.jac_noise is not None:
            noise_jac = lambda z: np.atleast_2d(np.asarray(model.jac_noise(z), float))
        else:
            noise_jac = lambda z: central_jacobian(
                lambda v: model.func(z, v), zero, jacobian_step
            )

        def out_linear(xn):
            return state_jac(assemble(xn))[:, linear_rows]

        def out_noise(xn):
            return noise_jac(assemble(xn))

        def out_value(xn):
            z = assemble(xn)
            return base(z) - state_jac(z)[:, linear_rows] @ lin_point

        return OutputModelC(
            dim_nonlinear=len(nonlinear_rows),
            dim_linear=len(linear_rows),
            dim_output=model.dim_output,
            func=out_value,
            linear_map=out_linear,
            noise_input=out_noise,
            noise_cov=np.atleast_2d(np.asarray(model.noise_cov, float)),
        )
    raise TypeError(f"cannot lower {type(model).__name__} to level c")


def lower_to_d(model, lin_point, jacobian_step: float = DEFAULT_JACOBIAN_STEP):
    """Linearize the whole active block (and noise) of a level-a model at lin_point."""
    lin_point = _as_vec(lin_point)
    if isinstance(model, TransitionModelA):
        if model.noise_cov is None:
            raise ValueError("level-d transition requires a noise covariance")
        zero = np.zeros(model.dim_noise)
        base = lambda z: _as_vec(model.func(z, zero))
        if model.jac_state is not None:
            state_map = np.atleast_2d(np.asarray(model.jac_state(lin_point), float))
        else:
            state_map = central_jacobian(base, lin_point, jacobian_step)
        if model.jac_noise is not None:
            noise_input = np.atleast_2d(np.asarray(model.jac_noise(lin_point), float))
        else:
            noise_input = central_jacobian(
                lambda w: model.func(lin_point, w), zero, jacobian_step
            )
        return TransitionModelD(
            offset=base(lin_point) - state_map @ lin_point,
            state_map=state_map,
            noise_input=noise_input,
            noise_cov=np.atleast_2d(np.asarray(model.noise_cov, float)),
        )
    if isinstance(model, OutputModelA):
        if not model.noise_gaussian or model.noise_cov is None:
            raise ValueError("level-d output requires Gaussian noise moments")
        zero = np.zeros(model.dim_noise)
        base = lambda z: _as_vec(model.func(z, zero))
        if model.jac_state is not None:
            state_map = np.atleast_2d(np.asarray(model.jac_state(lin_point), float))
        else:
            state_map = central_jacobian(base, lin_point, jacobian_step)
        if model.jac_noise is not None:
            noise_input = np.atleast_2d(np.asarray(model.jac_noise(lin_point), float))
        else:
            noise_input = central_jacobian(
                lambda v: model.func(lin_point, v), zero, jacobian_step
            )
        return OutputModelD(
            offset=base(lin_point) - state_map @ lin_point,
            state_map=state_map,
            noise_input=noise_input,
            noise_cov=np.atleast_2d(np.asarray(model.noise_cov, float)),
        )
    raise TypeError(f"cannot lower {type(model).__name__} to level d")


def default_lin_point(belief: GaussianBelief, rows) -> np.ndarray:
    """Marginal prior mean of the projected block, the usual linearization point."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    return rows @ belief.mean
