"""Built-in scenario models for the simulation/comparison harness.

Each scenario bundles the ground-truth simulator, the marginalized models at
the levels it supports, a trivial full-state split, and the full-state
baseline descriptions. Parameters are overridable through the scenario
config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
import scipy.stats

from .baselines import LinearSystem, NonlinearSystem
from .compose import StateLayout
from .errors import ConfigError
from .gaussian import SubspaceSplit, make_split
from .models import (
    OutputModelA,
    OutputModelB,
    OutputModelD,
    TransitionModelA,
    TransitionModelB,
    TransitionModelD,
)


@dataclass
class Scenario:
    name: str
    layout: StateLayout
    init_mean: np.ndarray
    init_cov: np.ndarray
    dim_output: int
    transition_true: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    measure_true: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    transition_models: Dict[str, object]
    output_models: Dict[str, object]
    split: SubspaceSplit
    linear_baseline: Optional[LinearSystem] = None
    nonlinear_baseline: Optional[NonlinearSystem] = None
    params: Dict[str, float] = field(default_factory=dict)

    @property
    def dim_state(self) -> int:
        return self.layout.dim


def _trivial_split(n: int) -> SubspaceSplit:
    return make_split(np.eye(n), np.zeros((0, n)))


def _merge(defaults: dict, params: Optional[dict], name: str) -> dict:
    merged = dict(defaults)
    for key, value in (params or {}).items():
        if key not in defaults:
            raise ConfigError(f"unknown parameter {key!r} for model {name!r}")
        merged[key] = float(value)
    return merged


def _gaussian_pdf_factory(var: float):
    def density(v):
        v = np.asarray(v, dtype=float)
        return np.exp(-0.5 * v**2 / var).reshape(-1)[0] / math.sqrt(2.0 * math.pi * var)

    return density


def make_linear_scalar(params: Optional[dict] = None) -> Scenario:
    p = _merge({"a": 0.95, "q": 0.1, "r": 0.5, "p0": 1.0}, params, "linear-scalar")
    a, q, r = p["a"], p["q"], p["r"]
    sq, sr = math.sqrt(q), math.sqrt(r)
    trans_d = TransitionModelD(offset=[0.0], state_map=[[a]], noise_input=[[1.0]], noise_cov=[[q]])
    trans_b = TransitionModelB(
        dim_active=1,
        dim_noise=1,
        func=lambda x: a * x,
        noise_input=lambda x: np.eye(1),
        noise_cov=[[q]],
        vectorized=True,
    )
    trans_a = TransitionModelA(
        dim_active=1,
        dim_noise=1,
        func=lambda x, w: a * x + w,
        noise_sampler=lambda rng, k: sq * rng.standard_normal((k, 1)),
        noise_cov=[[q]],
        jac_state=lambda x: np.array([[a]]),
        jac_noise=lambda x: np.eye(1),
        vectorized=True,
    )
    out_d = OutputModelD(offset=[0.0], state_map=[[1.0]], noise_input=[[1.0]], noise_cov=[[r]])
    out_a = OutputModelA(
        dim_active=1,
        dim_noise=1,
        dim_output=1,
        func=lambda x, v: x + v,
        noise_sampler=lambda rng, k: sr * rng.standard_normal((k, 1)),
        noise_cov=[[r]],
        likelihood=lambda y, x: np.exp(
            -0.5 * (y[0] - np.asarray(x, dtype=float).reshape(-1)) ** 2 / r
        ),
        noise_density=_gaussian_pdf_factory(r),
        jac_state=lambda x: np.eye(1),
        jac_noise=lambda x: np.eye(1),
        vectorized=True,
    )
    out_b = OutputModelB(
        dim_active=1,
        dim_output=1,
        func=lambda x: np.asarray(x, dtype=float),
        noise_input=lambda x: np.eye(1),
        noise_density=_gaussian_pdf_factory(r),
        vectorized=True,
    )
    baseline = LinearSystem(
        trans=np.array([[a]]),
        trans_offset=np.zeros(1),
        process_cov=np.array([[q]]),
        obs=np.eye(1),
        obs_offset=np.zeros(1),
        obs_cov=np.array([[r]]),
    )
    return Scenario(
        name="linear-scalar",
        layout=StateLayout((("x", "unit"),)),
        init_mean=np.zeros(1),
        init_cov=np.array([[p["p0"]]]),
        dim_output=1,
        transition_true=lambda x, rng: a * x + sq * rng.standard_normal(1),
        measure_true=lambda x, rng: x + sr * rng.standard_normal(1),
        transition_models={"a": trans_a, "b": trans_b, "d": trans_d},
        output_models={"a": out_a, "b": out_b, "d": out_d},
        split=_trivial_split(1),
        linear_baseline=baseline,
        params=p,
    )


def make_constant_velocity(params: Optional[dict] = None) -> Scenario:
    p = _merge({"dt": 1.0, "q": 0.05, "r": 0.5, "p0": 1.0}, params, "constant-velocity")
    dt, q, r = p["dt"], p["q"], p["r"]
    fmat = np.array([[1.0, dt], [0.0, 1.0]])
    gmat = np.array([[0.5 * dt**2], [dt]])
    hmat = np.array([[1.0, 0.0]])
    sq, sr = math.sqrt(q), math.sqrt(r)
    trans_d = TransitionModelD(offset=np.zeros(2), state_map=fmat, noise_input=gmat, noise_cov=[[q]])
    out_d = OutputModelD(offset=[0.0], state_map=hmat, noise_input=[[1.0]], noise_cov=[[r]])
    out_a = OutputModelA(
        dim_active=2,
        dim_noise=1,
        dim_output=1,
        func=lambda x, v: (x[..., :1] if x.ndim > 1 else x[:1]) + v,
        noise_sampler=lambda rng, k: sr * rng.standard_normal((k, 1)),
        noise_cov=[[r]],
        likelihood=lambda y, x: float(np.exp(-0.5 * (y[0] - x[0]) ** 2 / r)),
        noise_density=_gaussian_pdf_factory(r),
        jac_state=lambda x: hmat,
        jac_noise=lambda x: np.eye(1),
    )
    baseline = LinearSystem(
        trans=fmat,
        trans_offset=np.zeros(2),
        process_cov=gmat @ np.array([[q]]) @ gmat.T,
        obs=hmat,
        obs_offset=np.zeros(1),
        obs_cov=np.array([[r]]),
    )
    return Scenario(
        name="constant-velocity",
        layout=StateLayout((("pos", "m"), ("vel", "m"))),
        init_mean=np.zeros(2),
        init_cov=p["p0"] * np.eye(2),
        dim_output=1,
        transition_true=lambda x, rng: fmat @ x + gmat[:, 0] * (sq * rng.standard_normal()),
        measure_true=lambda x, rng: hmat @ x + sr * rng.standard_normal(1),
        transition_models={"d": trans_d},
        output_models={"a": out_a, "d": out_d},
        split=_trivial_split(2),
        linear_baseline=baseline,
        params=p,
    )


def make_cubic_output(params: Optional[dict] = None) -> Scenario:
    p = _merge({"a": 0.9, "q": 0.04, "r": 0.09, "p0": 0.5}, params, "cubic-output")
    a, q, r = p["a"], p["q"], p["r"]
    sq, sr = math.sqrt(q), math.sqrt(r)
    trans_d = TransitionModelD(offset=[0.0], state_map=[[a]], noise_input=[[1.0]], noise_cov=[[q]])
    out_a = OutputModelA(
        dim_active=1,
        dim_noise=1,
        dim_output=1,
        func=lambda x, v: x**3 + v,
        noise_sampler=lambda rng, k: sr * rng.standard_normal((k, 1)),
        noise_cov=[[r]],
        likelihood=lambda y, x: np.exp(
            -0.5 * (y[0] - np.asarray(x, dtype=float).reshape(-1) ** 3) ** 2 / r
        ),
        noise_density=_gaussian_pdf_factory(r),
        jac_state=lambda x: np.atleast_2d(3.0 * np.asarray(x, dtype=float) ** 2),
        jac_noise=lambda x: np.eye(1),
        vectorized=True,
    )
    out_b = OutputModelB(
        dim_active=1,
        dim_output=1,
        func=lambda x: np.asarray(x, dtype=float) ** 3,
        noise_input=lambda x: np.eye(1),
        noise_density=_gaussian_pdf_factory(r),
        vectorized=True,
    )
    nonlinear = NonlinearSystem(
        trans=lambda x: a * x,
        trans_jac=lambda x: np.array([[a]]),
        process_cov=np.array([[q]]),
        obs=lambda x: x**3,
        obs_jac=lambda x: np.atleast_2d(3.0 * x**2),
        obs_cov=np.array([[r]]),
    )
    return Scenario(
        name="cubic-output",
        layout=StateLayout((("x", "unit"),)),
        init_mean=np.zeros(1),
        init_cov=np.array([[p["p0"]]]),
        dim_output=1,
        transition_true=lambda x, rng: a * x + sq * rng.standard_normal(1),
        measure_true=lambda x, rng: x**3 + sr * rng.standard_normal(1),
        transition_models={"d": trans_d},
        output_models={"a": out_a, "b": out_b},
        split=_trivial_split(1),
        nonlinear_baseline=nonlinear,
        params=p,
    )


def _range_bearing(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return np.array([math.hypot(x[0], x[1]), math.atan2(x[1], x[0])])
    return np.stack([np.hypot(x[:, 0], x[:, 1]), np.arctan2(x[:, 1], x[:, 0])], axis=1)


def _range_bearing_jac(x):
    px, py = float(x[0]), float(x[1])
    rng = math.hypot(px, py)
    return np.array([[px / rng, py / rng], [-py / rng**2, px / rng**2]])


def make_range_bearing(params: Optional[dict] = None) -> Scenario:
    p = _merge(
        {"q": 0.02, "r_range": 0.05, "r_bearing": 0.002, "x0": 5.0, "y0": 2.0, "p0": 0.25},
        params,
        "range-bearing",
    )
    q = p["q"]
    rcov = np.diag([p["r_range"], p["r_bearing"]])
    rchol = np.sqrt(np.diag(rcov))
    sq = math.sqrt(q)
    trans_d = TransitionModelD(
        offset=np.zeros(2), state_map=np.eye(2), noise_input=np.eye(2), noise_cov=q * np.eye(2)
    )
    out_a = OutputModelA(
        dim_active=2,
        dim_noise=2,
        dim_output=2,
        func=lambda x, v: _range_bearing(x) + v,
        noise_sampler=lambda rng, k: rng.standard_normal((k, 2)) * rchol,
        noise_cov=rcov,
        jac_state=_range_bearing_jac,
        jac_noise=lambda x: np.eye(2),
        vectorized=True,
    )

    def _rb_density(v):
        v = np.atleast_2d(np.asarray(v, dtype=float))
        quad = v[:, 0] ** 2 / rcov[0, 0] + v[:, 1] ** 2 / rcov[1, 1]
        norm = 2.0 * math.pi * math.sqrt(rcov[0, 0] * rcov[1, 1])
        out = np.exp(-0.5 * quad) / norm
        return out if out.size > 1 else float(out[0])

    out_b = OutputModelB(
        dim_active=2,
        dim_output=2,
        func=_range_bearing,
        noise_input=lambda x: np.eye(2),
        noise_density=_rb_density,
        vectorized=True,
    )
    nonlinear = NonlinearSystem(
        trans=lambda x: x,
        trans_jac=lambda x: np.eye(2),
        process_cov=q * np.eye(2),
        obs=_range_bearing,
        obs_jac=_range_bearing_jac,
        obs_cov=rcov,
    )
    return Scenario(
        name="range-bearing",
        layout=StateLayout((("px", "m"), ("py", "m"))),
        init_mean=np.array([p["x0"], p["y0"]]),
        init_cov=p["p0"] * np.eye(2),
        dim_output=2,
        transition_true=lambda x, rng: x + sq * rng.standard_normal(2),
        measure_true=lambda x, rng: _range_bearing(x) + rchol * rng.standard_normal(2),
        transition_models={"d": trans_d},
        output_models={"a": out_a, "b": out_b},
        split=_trivial_split(2),
        nonlinear_baseline=nonlinear,
        params=p,
    )


def make_student_t(params: Optional[dict] = None) -> Scenario:
    p = _merge({"a": 0.95, "q": 0.1, "scale": 0.5, "dof": 2.0, "p0": 1.0}, params, "student-t")
    a, q, scale, dof = p["a"], p["q"], p["scale"], p["dof"]
    sq = math.sqrt(q)
    trans_d = TransitionModelD(offset=[0.0], state_map=[[a]], noise_input=[[1.0]], noise_cov=[[q]])

    def t_density(v):
        v = np.asarray(v, dtype=float)
        out = scipy.stats.t.pdf(v.reshape(-1), df=dof)
        return out if out.size > 1 else float(out[0])

    out_b = OutputModelB(
        dim_active=1,
        dim_output=1,
        func=lambda x: np.asarray(x, dtype=float),
        noise_input=lambda x: scale * np.eye(1),
        noise_density=t_density,
        vectorized=True,
    )
    return Scenario(
        name="student-t",
        layout=StateLayout((("x", "unit"),)),
        init_mean=np.zeros(1),
        init_cov=np.array([[p["p0"]]]),
        dim_output=1,
        transition_true=lambda x, rng: a * x + sq * rng.standard_normal(1),
        measure_true=lambda x, rng: x + scale * rng.standard_t(dof, size=1),
        transition_models={"d": trans_d},
        output_models={"b": out_b},
        split=_trivial_split(1),
        params=p,
    )


REGISTRY = {
    "linear-scalar": make_linear_scalar,
    "constant-velocity": make_constant_velocity,
    "cubic-output": make_cubic_output,
    "range-bearing": make_range_bearing,
    "student-t": make_student_t,
}


def build_scenario(name: str, params: Optional[dict] = None) -> Scenario:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r}; known: {sorted(REGISTRY)}") from None
    return factory(params)
