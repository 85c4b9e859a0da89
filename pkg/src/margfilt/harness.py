"""Scenario simulation, filter execution, baselines, metrics and file I/O.

Configs are JSON, validated against a strict schema (unknown keys rejected).
Trajectories and estimates are CSV with 17-significant-digit floats so runs
with the same config and seeds are byte-identical; metrics are JSON. The
report path also renders PNG figures next to the delimited outputs.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import jsonschema
import numpy as np
import scipy.stats

from . import plots
from .baselines import ekf_step, kalman_step, sigma_point_step
from .compose import (
    BindingEntry,
    StateLayout,
    SubmodelBinding,
    UnitTable,
    build_projection,
    complement_basis,
    default_units,
)
from .engine import BoundModel, StepConfig, step
from .errors import ConfigError, FilterError
from .gaussian import GaussianBelief, SubspaceSplit, make_split
from .models import default_lin_point, lower_to_d
from .quadrature import GaussHermiteRule, KernelConfig, MonteCarloRule, UnscentedRule
from .registry import Scenario, build_scenario

_RULE_SCHEMA = {
    "type": "object",
    "oneOf": [
        {
            "properties": {
                "kind": {"const": "gauss-hermite"},
                "degree": {"type": "integer", "minimum": 1},
                "node_budget": {"type": "integer", "minimum": 1},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "kind": {"const": "unscented"},
                "spread": {"type": "number", "minimum": 0},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "kind": {"const": "monte-carlo"},
                "count": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0},
            },
            "required": ["kind", "count"],
            "additionalProperties": False,
        },
    ],
}

_VARIANT_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "kind": {"enum": ["marginalized", "kalman", "ekf", "sigma-point"]},
        "predict_level": {"enum": ["a", "b", "c", "d"]},
        "update_level": {
            "enum": ["a-kde", "a-likelihood", "a-parametric", "b", "c", "d"]
        },
        "predict_rule": _RULE_SCHEMA,
        "update_rule": _RULE_SCHEMA,
        "noise_rule": _RULE_SCHEMA,
        "kernel": {
            "type": "object",
            "properties": {
                "bandwidth": {"const": "silverman"},
                "bandwidth_matrix": {"type": "array"},
            },
            "additionalProperties": False,
        },
        "linearize_output": {"type": "boolean"},
        "on_degenerate": {"enum": ["error", "keep-prior"]},
        "mc_fallback_count": {"type": "integer", "minimum": 2},
        "spread": {"type": "number", "minimum": 0},
    },
    "required": ["name", "kind"],
    "additionalProperties": False,
}

_BINDING_ENTRY_SCHEMA = {
    "type": "object",
    "properties": {
        "state": {"type": "string"},
        "sys": {"type": "string"},
        "combo": {
            "type": "array",
            "items": {
                "type": "array",
                "prefixItems": [{"type": "string"}, {"type": "number"}],
                "minItems": 2,
                "maxItems": 2,
            },
        },
    },
    "required": ["state"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "schema": {"const": 1},
        "model": {
            "type": "object",
            "properties": {
                "name": {"type": "string"},
                "params": {"type": "object"},
            },
            "required": ["name"],
            "additionalProperties": False,
        },
        "steps": {"type": "integer", "minimum": 1},
        "seeds": {
            "type": "object",
            "properties": {
                "truth": {"type": "integer", "minimum": 0},
                "noise": {"type": "integer", "minimum": 0},
                "rules": {"type": "integer", "minimum": 0},
            },
            "required": ["truth", "noise", "rules"],
            "additionalProperties": False,
        },
        "drop_steps": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "init": {
            "type": "object",
            "properties": {"mean": {"type": "array"}, "cov": {"type": "array"}},
            "required": ["mean", "cov"],
            "additionalProperties": False,
        },
        "layout": {
            "type": "array",
            "items": {
                "type": "array",
                "prefixItems": [{"type": "string"}, {"type": "string"}],
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "bindings": {
            "type": "object",
            "properties": {
                "transition": {"type": "array", "items": _BINDING_ENTRY_SCHEMA},
                "output": {"type": "array", "items": _BINDING_ENTRY_SCHEMA},
            },
            "additionalProperties": False,
        },
        "units": {
            "type": "array",
            "items": {
                "type": "array",
                "prefixItems": [
                    {"type": "string"},
                    {"type": "string"},
                    {"type": "number"},
                ],
                "minItems": 3,
                "maxItems": 3,
            },
        },
        "variants": {"type": "array", "items": _VARIANT_SCHEMA, "minItems": 1},
        "output_dir": {"type": "string"},
    },
    "required": ["schema", "model", "steps", "seeds", "variants"],
    "additionalProperties": False,
}


def validate_config(config: dict) -> dict:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config rejected: {exc.message}") from exc
    return config


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            config = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return validate_config(config)


def override_seed(config: dict, seed: int) -> dict:
    """Re-derive all three seed roles from one master seed."""
    kids = np.random.SeedSequence(seed).spawn(3)
    out = dict(config)
    out["seeds"] = {
        "truth": int(kids[0].generate_state(1)[0]),
        "noise": int(kids[1].generate_state(1)[0]),
        "rules": int(kids[2].generate_state(1)[0]),
    }
    return out


def _rule_from_config(entry: Optional[dict]):
    if entry is None:
        return GaussHermiteRule()
    kind = entry["kind"]
    if kind == "gauss-hermite":
        return GaussHermiteRule(
            degree=entry.get("degree", 5),
            node_budget=entry.get("node_budget", 1_000_000),
        )
    if kind == "unscented":
        return UnscentedRule(spread=entry.get("spread", 1.0))
    return MonteCarloRule(count=entry["count"], seed=entry.get("seed", 0))


def _kernel_from_config(entry: Optional[dict]) -> KernelConfig:
    if entry is None:
        return KernelConfig()
    if "bandwidth_matrix" in entry:
        return KernelConfig(bandwidth=np.asarray(entry["bandwidth_matrix"], dtype=float))
    return KernelConfig()


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


@dataclass
class SystemSetup:
    """Scenario embedded in (possibly) a larger composed system state."""

    scenario: Scenario
    layout: StateLayout
    init: GaussianBelief
    transition_split: SubspaceSplit
    output_split: SubspaceSplit
    composed: bool


def _binding_from_config(entries: List[dict], scenario: Scenario) -> SubmodelBinding:
    sub_units = dict(scenario.layout.entries)
    built = []
    for item in entries:
        name = item["state"]
        if name not in sub_units:
            raise ConfigError(f"binding references unknown model state {name!r}")
        if "combo" in item:
            built.append(
                BindingEntry(name=name, unit=sub_units[name], combo=tuple(item["combo"]))
            )
        else:
            built.append(
                BindingEntry(
                    name=name,
                    unit=sub_units[name],
                    combo=((item.get("sys", name), 1.0),),
                )
            )
    return SubmodelBinding(tuple(built))


def build_system(config: dict) -> SystemSetup:
    scenario = build_scenario(config["model"]["name"], config["model"].get("params"))
    units = default_units()
    for from_u, to_u, scale in config.get("units", []):
        units.add(from_u, to_u, scale)
    if "layout" not in config:
        init_mean, init_cov = scenario.init_mean, scenario.init_cov
        if "init" in config:
            init_mean = np.asarray(config["init"]["mean"], dtype=float)
            init_cov = np.asarray(config["init"]["cov"], dtype=float)
        return SystemSetup(
            scenario=scenario,
            layout=scenario.layout,
            init=GaussianBelief(init_mean, init_cov),
            transition_split=scenario.split,
            output_split=scenario.split,
            composed=False,
        )
    layout = StateLayout(tuple((n, u) for n, u in config["layout"]))
    if "init" not in config:
        raise ConfigError("composed layouts need an explicit system-level init")
    bindings = config.get("bindings", {})
    default_entries = [{"state": n} for n, _ in scenario.layout.entries]
    tbind = _binding_from_config(bindings.get("transition", default_entries), scenario)
    obind = _binding_from_config(bindings.get("output", default_entries), scenario)
    tactive = build_projection(layout, tbind, units)
    oactive = build_projection(layout, obind, units)
    return SystemSetup(
        scenario=scenario,
        layout=layout,
        init=GaussianBelief(
            np.asarray(config["init"]["mean"], dtype=float),
            np.asarray(config["init"]["cov"], dtype=float),
        ),
        transition_split=make_split(tactive, complement_basis(tactive)),
        output_split=make_split(oactive, complement_basis(oactive)),
        composed=True,
    )


def simulate(config: dict, out_dir) -> tuple[np.ndarray, list]:
    """Generate the truth trajectory and measurements, write truth.csv.

    Returns (truth (steps, n), measurements list with None for dropped steps).
    Deterministic given the config seeds.
    """
    setup = build_system(config)
    scenario = setup.scenario
    steps = config["steps"]
    dropped = set(config.get("drop_steps", []))
    truth_rng = np.random.Generator(np.random.Philox(key=config["seeds"]["truth"]))
    noise_rng = np.random.Generator(np.random.Philox(key=config["seeds"]["noise"]))

    n = setup.layout.dim
    tsplit, osplit = setup.transition_split, setup.output_split
    factor = np.linalg.cholesky(setup.init.cov + 1e-15 * np.eye(n))
    state = setup.init.mean + factor @ truth_rng.standard_normal(n)

    truth = np.empty((steps, n))
    measurements: list = []
    for k in range(1, steps + 1):
        sub_state = tsplit.active @ state
        sub_next = np.atleast_1d(scenario.transition_true(sub_state, noise_rng))
        state = tsplit.inv_active @ sub_next + tsplit.inv_inactive @ (tsplit.inactive @ state)
        truth[k - 1] = state
        if k in dropped:
            measurements.append(None)
        else:
            measurements.append(
                np.atleast_1d(scenario.measure_true(osplit.active @ state, noise_rng))
            )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "truth.csv"
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["step"]
            + [f"x_{name}" for name in setup.layout.names]
            + [f"y_{j}" for j in range(scenario.dim_output)]
        )
        for k in range(1, steps + 1):
            row = [str(k)] + [_fmt(v) for v in truth[k - 1]]
            y = measurements[k - 1]
            row += ["" for _ in range(scenario.dim_output)] if y is None else [_fmt(v) for v in y]
            writer.writerow(row)
    return truth, measurements


def read_truth(path, n_states: int, dim_output: int):
    truth_rows = []
    measurements = []
    with open(path, "r", newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        next(reader)
        for row in reader:
            truth_rows.append([float(v) for v in row[1 : 1 + n_states]])
            ycols = row[1 + n_states : 1 + n_states + dim_output]
            measurements.append(None if ycols[0] == "" else np.array([float(v) for v in ycols]))
    return np.asarray(truth_rows), measurements


_FLAG_NAMES = ("jitter_applied", "mc_fallback", "degenerate_update_skipped")


@dataclass
class VariantResult:
    name: str
    means: np.ndarray
    covs: np.ndarray
    step_flags: np.ndarray  # (steps, 3) ints, columns per _FLAG_NAMES
    wall_clock_s: float = 0.0

    @property
    def flags(self) -> Dict[str, int]:
        return {
            name: int(self.step_flags[:, i].sum()) for i, name in enumerate(_FLAG_NAMES)
        }


def _step_config(variant: dict) -> StepConfig:
    return StepConfig(
        predict_level=variant.get("predict_level", "d"),
        update_level=variant.get("update_level", "d"),
        predict_rule=_rule_from_config(variant.get("predict_rule")),
        update_rule=_rule_from_config(variant.get("update_rule")),
        noise_rule=_rule_from_config(variant["noise_rule"]) if "noise_rule" in variant else None,
        kernel=_kernel_from_config(variant.get("kernel")),
        on_degenerate=variant.get("on_degenerate", "keep-prior"),
        mc_fallback_count=variant.get("mc_fallback_count", 10_000),
    )


def _run_marginalized(setup: SystemSetup, variant: dict, measurements, rules_seed: int):
    scenario = setup.scenario
    config = _step_config(variant)
    tmodels, omodels = scenario.transition_models, scenario.output_models
    if config.predict_level not in tmodels:
        raise ConfigError(
            f"model {scenario.name!r} has no level-{config.predict_level} transition"
        )
    tmodel = tmodels[config.predict_level]
    update_key = config.update_level.split("-")[0]
    linearize = variant.get("linearize_output", False)
    if linearize:
        if "a" not in omodels:
            raise ConfigError("linearize_output needs a level-a output model")
        if config.update_level != "d":
            raise ConfigError("linearize_output implies update_level 'd'")
    elif update_key not in omodels:
        raise ConfigError(
            f"model {scenario.name!r} has no level-{update_key} output"
        )
    belief = setup.init
    means = np.empty((len(measurements), belief.dim))
    covs = np.empty((len(measurements), belief.dim, belief.dim))
    step_flags = np.zeros((len(measurements), len(_FLAG_NAMES)), dtype=int)
    seq = np.random.SeedSequence(rules_seed)
    bound_transition = BoundModel(tmodel, setup.transition_split)
    for k, y in enumerate(measurements):
        step_seed = int(seq.spawn(1)[0].generate_state(1)[0])
        if linearize:
            # Lower the general output model at the per-step marginal prior
            # mean. The prediction is re-run inside the full step with the
            # same phase seed, so both passes see identical nodes.
            predicted = step(belief, bound_transition, None, None, config, seed=step_seed).predicted
            lin_point = default_lin_point(predicted, setup.output_split.active)
            omodel = lower_to_d(omodels["a"], lin_point)
        else:
            omodel = omodels[update_key]
        report = step(
            belief,
            bound_transition,
            BoundModel(omodel, setup.output_split),
            y,
            config,
            seed=step_seed,
        )
        belief = report.updated
        means[k] = belief.mean
        covs[k] = belief.cov
        step_flags[k] = [int(getattr(report.flags, name)) for name in _FLAG_NAMES]
    return means, covs, step_flags


def _run_baseline(setup: SystemSetup, variant: dict, measurements):
    scenario = setup.scenario
    if setup.composed:
        raise ConfigError("full-state baselines are not defined on composed layouts")
    kind = variant["kind"]
    mean, cov = setup.init.mean.copy(), setup.init.cov.copy()
    means = np.empty((len(measurements), mean.size))
    covs = np.empty((len(measurements), mean.size, mean.size))
    for k, y in enumerate(measurements):
        if kind == "kalman":
            if scenario.linear_baseline is None:
                raise ConfigError(f"model {scenario.name!r} has no linear baseline")
            _, (mean, cov) = kalman_step(mean, cov, scenario.linear_baseline, y)
        elif kind == "ekf":
            if scenario.nonlinear_baseline is None:
                raise ConfigError(f"model {scenario.name!r} has no nonlinear baseline")
            _, (mean, cov) = ekf_step(mean, cov, scenario.nonlinear_baseline, y)
        else:
            if scenario.nonlinear_baseline is None:
                raise ConfigError(f"model {scenario.name!r} has no nonlinear baseline")
            _, (mean, cov) = sigma_point_step(
                mean, cov, scenario.nonlinear_baseline, y, spread=variant.get("spread", 1.0)
            )
        means[k] = mean
        covs[k] = cov
    return means, covs, np.zeros((len(measurements), len(_FLAG_NAMES)), dtype=int)


def run_variants(config: dict, measurements, only: Optional[str] = None):
    setup = build_system(config)
    results = []
    for variant in config["variants"]:
        if only is not None and variant["name"] != only:
            continue
        start = time.perf_counter()
        if variant["kind"] == "marginalized":
            means, covs, step_flags = _run_marginalized(
                setup, variant, measurements, config["seeds"]["rules"]
            )
        else:
            means, covs, step_flags = _run_baseline(setup, variant, measurements)
        results.append(
            VariantResult(
                name=variant["name"],
                means=means,
                covs=covs,
                step_flags=step_flags,
                wall_clock_s=time.perf_counter() - start,
            )
        )
    if not results:
        raise ConfigError(f"no variant named {only!r} in config")
    return setup, results


def nees_series(truth: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    out = np.empty(truth.shape[0])
    for k in range(truth.shape[0]):
        err = truth[k] - means[k]
        out[k] = float(err @ np.linalg.solve(covs[k], err))
    return out


def chi2_band(dim: int, steps: int) -> tuple[float, float]:
    """Two-sided 95% interval for the time-averaged NEES (steps*dim dof)."""
    dof = dim * steps
    return (
        float(scipy.stats.chi2.ppf(0.025, dof) / steps),
        float(scipy.stats.chi2.ppf(0.975, dof) / steps),
    )


def build_metrics(config: dict, setup: SystemSetup, truth, results) -> dict:
    steps = truth.shape[0]
    n = truth.shape[1]
    report: dict = {
        "schema": 1,
        "scenario": setup.scenario.name,
        "steps": steps,
        "variants": {},
        "comparisons": {},
    }
    band = chi2_band(n, steps)
    for res in results:
        err = res.means - truth
        nees = nees_series(truth, res.means, res.covs)
        report["variants"][res.name] = {
            "rmse": [float(v) for v in np.sqrt(np.mean(err**2, axis=0))],
            "abs_error": [[float(v) for v in row] for row in np.abs(err)],
            "nees": [float(v) for v in nees],
            "nees_time_avg": float(np.mean(nees)),
            "nees_bounds_95": [band[0], band[1]],
            "flags": res.flags,
            "wall_clock_s": res.wall_clock_s,
            "estimates_csv": f"estimates_{res.name}.csv",
        }
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            a, b = results[i], results[j]
            dmean = float(np.max(np.abs(a.means - b.means)))
            dcov = float(np.max(np.abs(a.covs - b.covs)))
            report["comparisons"][f"{a.name} vs {b.name}"] = {
                "max_mean_abs_diff": dmean,
                "max_cov_abs_diff": dcov,
            }
    return report


def write_estimates(out_dir, setup: SystemSetup, res: VariantResult, config: dict):
    path = Path(out_dir) / f"estimates_{res.name}.csv"
    names = setup.layout.names
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["step"]
            + [f"mean_{n}" for n in names]
            + [f"var_{n}" for n in names]
            + [f"flag_{n}" for n in _FLAG_NAMES]
        )
        for k in range(res.means.shape[0]):
            writer.writerow(
                [str(k + 1)]
                + [_fmt(v) for v in res.means[k]]
                + [_fmt(res.covs[k][i, i]) for i in range(len(names))]
                + [str(int(v)) for v in res.step_flags[k]]
            )
    return path


def run_scenario(config: dict, out_dir, only: Optional[str] = None, figures: bool = True) -> dict:
    """Run every configured filter variant; emit estimates CSVs, metrics, figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    setup = build_system(config)
    truth_path = out_dir / "truth.csv"
    if truth_path.exists():
        truth, measurements = read_truth(
            truth_path, setup.layout.dim, setup.scenario.dim_output
        )
        if truth.shape[0] != config["steps"]:
            raise ConfigError("existing truth.csv does not match config steps")
    else:
        truth, measurements = simulate(config, out_dir)
    setup, results = run_variants(config, measurements, only)
    metrics = build_metrics(config, setup, truth, results)
    for res in results:
        write_estimates(out_dir, setup, res, config)
    with open(out_dir / "metrics.json", "w", encoding="utf-8") as handle:
        json.dump(metrics, handle, indent=2, sort_keys=True)
        handle.write("\n")
    if figures:
        steps_axis = np.arange(1, truth.shape[0] + 1)
        for res in results:
            variances = np.stack([np.diag(c) for c in res.covs])
            plots.render_estimates(
                out_dir / f"estimates_{res.name}.png",
                setup.layout.names,
                steps_axis,
                truth,
                res.means,
                variances,
                f"{setup.scenario.name}: {res.name}",
            )
        per_step_band = (
            float(scipy.stats.chi2.ppf(0.025, setup.layout.dim)),
            float(scipy.stats.chi2.ppf(0.975, setup.layout.dim)),
        )
        plots.render_nees(
            out_dir / "nees.png",
            steps_axis,
            {r.name: metrics["variants"][r.name]["nees"] for r in results},
            per_step_band,
            f"{setup.layout.dim} dof",
        )
        if len(results) > 1:
            diffs = {}
            for i in range(len(results)):
                for j in range(i + 1, len(results)):
                    a, b = results[i], results[j]
                    diffs[f"{a.name} vs {b.name}"] = np.max(
                        np.abs(a.means - b.means), axis=1
                    )
            plots.render_differences(out_dir / "differences.png", steps_axis, diffs)
    return metrics
