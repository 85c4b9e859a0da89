"""Command-line harness: simulate, run, compare, selftest.

Exit codes: 0 success, 2 config/usage error, 3 numerical failure.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click

from .errors import ConfigError, FilterError
from .harness import load_config, override_seed, run_scenario, simulate


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(2)
        except FilterError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(3)

    return wrapper


def _load(config_path, seed):
    config = load_config(config_path)
    if seed is not None:
        config = override_seed(config, seed)
    return config


def _out_dir(config, out):
    if out is not None:
        return Path(out)
    return Path(config.get("output_dir", "out"))


@click.group()
def main():
    """Marginalized Gaussian filtering harness."""


@main.command("simulate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Override all config seeds.")
@click.option("--out", type=click.Path(), default=None)
@_handle_errors
def simulate_cmd(config_path, seed, out):
    """Write the truth trajectory and measurement CSV for a scenario."""
    config = _load(config_path, seed)
    truth, _ = simulate(config, _out_dir(config, out))
    click.echo(f"wrote {truth.shape[0]} steps to {_out_dir(config, out) / 'truth.csv'}")


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Override all config seeds.")
@click.option("--out", type=click.Path(), default=None)
@click.option("--variant", default=None, help="Run a single named variant.")
@_handle_errors
def run_cmd(config_path, seed, out, variant):
    """Run the configured filter variants; emit estimates, metrics, figures."""
    config = _load(config_path, seed)
    out_dir = _out_dir(config, out)
    metrics = run_scenario(config, out_dir, only=variant)
    for name, entry in metrics["variants"].items():
        rmse = ", ".join(f"{v:.4g}" for v in entry["rmse"])
        click.echo(
            f"{name}: rmse [{rmse}]  nees avg {entry['nees_time_avg']:.3f} "
            f"(95% band {entry['nees_bounds_95'][0]:.3f}..{entry['nees_bounds_95'][1]:.3f})"
        )
    click.echo(f"outputs in {out_dir}")


@main.command("compare")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Override all config seeds.")
@click.option("--out", type=click.Path(), default=None)
@_handle_errors
def compare_cmd(config_path, seed, out):
    """Run all variants and report pairwise estimate differences."""
    config = _load(config_path, seed)
    out_dir = _out_dir(config, out)
    metrics = run_scenario(config, out_dir)
    if not metrics["comparisons"]:
        click.echo("nothing to compare: configure at least two variants")
    for pair, entry in metrics["comparisons"].items():
        click.echo(
            f"{pair}: max mean diff {entry['max_mean_abs_diff']:.3e}, "
            f"max cov diff {entry['max_cov_abs_diff']:.3e}"
        )
    click.echo(f"outputs in {out_dir}")


@main.command("selftest")
@click.option("--criterion", type=int, default=None, help="Run a single criterion by number.")
@_handle_errors
def selftest_cmd(criterion):
    """Run the acceptance suite and print one pass/fail line per criterion."""
    from .acceptance import run_all, run_one

    results = [run_one(criterion)] if criterion is not None else run_all()
    failed = False
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        click.echo(f"ACCEPTANCE {res.number:02d} {res.name}: {status} ({res.detail})")
        failed = failed or not res.passed
    if failed:
        sys.exit(3)


if __name__ == "__main__":  # pragma: no cover
    main()
