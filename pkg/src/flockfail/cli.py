"""Command-line entry point.

Subcommands: simulate, sweep, critical-velocity, verify-bounds.
Exit codes: 0 success, 2 config error, 3 runtime error, 4 bound-check
failure.
"""
from __future__ import annotations

import itertools
import sys
from dataclasses import replace
from pathlib import Path

import click
import yaml

from . import analysis, io
from .experiment import (
    DEFAULT_FLOCK_EPSILON,
    DEFAULT_HORIZON,
    ExperimentConfig,
    derive_rng,
    monte_carlo_sweep,
    run_trajectory,
)

EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3
EXIT_BOUND_FAILURE = 4

CONFIG_KEYS = {
    "k",
    "alpha",
    "lambda",
    "h",
    "horizon",
    "seed",
    "ic",
    "record_stride",
    "record_spectral",
    "stop_epsilon",
}


class ConfigError(Exception):
    pass


def _load_document(text: str) -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML/JSON: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a key-value mapping")
    return doc


def _apply_overrides(doc: dict, overrides: tuple[str, ...]) -> dict:
    doc = dict(doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, value = item.partition("=")
        doc[key.strip()] = yaml.safe_load(value)
    return doc


def _parse_ic(raw):
    if raw is None or raw == "standard-normal":
        return "standard-normal"
    if isinstance(raw, dict) and set(raw) == {"positions", "velocities"}:
        return (raw["positions"], raw["velocities"])
    raise ConfigError(
        "ic must be 'standard-normal' or a mapping with positions and velocities"
    )


def parse_config(text: str, overrides: tuple[str, ...] = (), allow_lists: bool = False):
    """Build one ExperimentConfig (or, with allow_lists, the cross-product
    grid over list-valued k/alpha/lambda) from a YAML/JSON document.

    Required keys: k, alpha, lambda. h defaults to 1/k, horizon to 10^4.
    Unknown keys are rejected; overrides take precedence over file values.
    """
    doc = _apply_overrides(_load_document(text), overrides)
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("k", "alpha", "lambda"):
        if key not in doc:
            raise ConfigError(f"missing required config key: {key}")

    def as_list(key):
        val = doc[key]
        return list(val) if isinstance(val, (list, tuple)) else [val]

    grids = [as_list("k"), as_list("alpha"), as_list("lambda")]
    if not allow_lists and any(len(g) > 1 for g in grids):
        raise ConfigError("k, alpha and lambda must be scalars for this command")

    configs = []
    for k, alpha, lam in itertools.product(*grids):
        try:
            cfg = ExperimentConfig(
                k=int(k),
                alpha=float(alpha),
                lam=float(lam),
                h=None if doc.get("h") is None else float(doc["h"]),
                horizon=int(doc.get("horizon", DEFAULT_HORIZON)),
                master_seed=int(doc.get("seed", 0)),
                ic=_parse_ic(doc.get("ic")),
                record_stride=int(doc.get("record_stride", 1)),
                record_spectral=bool(doc.get("record_spectral", True)),
                stop_epsilon=(
                    None if doc.get("stop_epsilon") is None else float(doc["stop_epsilon"])
                ),
            )
            cfg.params()  # surfaces timestep/range violations now
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        configs.append(cfg)
    return configs if allow_lists else configs[0]


def _read_config(config_path: str, overrides, seed, allow_lists=False):
    path = Path(config_path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    if seed is not None:
        overrides = tuple(overrides) + (f"seed={seed}",)
    return parse_config(path.read_text(), tuple(overrides), allow_lists=allow_lists)


def _out_dir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


@click.group()
def main():
    """Cucker-Smale flocking with random link failures."""


config_opt = click.option("--config", "config_path", required=True, help="YAML/JSON config file.")
out_opt = click.option("--out", default=".", help="Output directory.")
seed_opt = click.option("--seed", type=int, default=None, help="Override the master seed.")
set_opt = click.option(
    "--set", "overrides", multiple=True, help="Override a config key (key=value, repeatable)."
)


@main.command()
@config_opt
@out_opt
@seed_opt
@set_opt
def simulate(config_path, out, seed, overrides):
    """Run one trajectory and write its time series."""
    try:
        cfg = _read_config(config_path, overrides, seed)
    except ConfigError as exc:
        raise SystemExit(_config_fail(exc))
    try:
        record = run_trajectory(cfg)
        path = io.write_trajectory(record, _out_dir(out) / "trajectory.csv")
    except Exception as exc:
        raise SystemExit(_runtime_fail(exc))
    click.echo(f"wrote {path} ({len(record.t)} rows)")


@main.command()
@config_opt
@out_opt
@seed_opt
@set_opt
@click.option("--runs", type=int, default=10, help="Runs per sweep cell.")
def sweep(config_path, out, seed, overrides, runs):
    """Monte Carlo sweep over list-valued k / alpha / lambda cells."""
    try:
        grid = _read_config(config_path, overrides, seed, allow_lists=True)
    except ConfigError as exc:
        raise SystemExit(_config_fail(exc))
    try:
        # spectral recording is not needed for flocking statistics
        grid = [
            replace(cfg, record_spectral=False, stop_epsilon=cfg.stop_epsilon or DEFAULT_FLOCK_EPSILON)
            for cfg in grid
        ]
        summary = monte_carlo_sweep(grid, runs)
        path = io.write_sweep(summary, _out_dir(out) / "sweep.csv")
    except Exception as exc:
        raise SystemExit(_runtime_fail(exc))
    click.echo(f"wrote {path} ({len(summary.cells)} cells)")


@main.command("critical-velocity")
@config_opt
@out_opt
@seed_opt
@set_opt
@click.option("--samples", type=int, default=10_000, help="Monte Carlo mask samples.")
def critical_velocity(config_path, out, seed, overrides, samples):
    """Estimate the critical velocity (expected non-colored Fiedler number)."""
    try:
        cfg = _read_config(config_path, overrides, seed)
    except ConfigError as exc:
        raise SystemExit(_config_fail(exc))
    try:
        estimate, std_error = analysis.critical_velocity_estimate(
            cfg.k, cfg.lam, samples, derive_rng(cfg.master_seed)
        )
        lines = [
            "k,lambda,n_samples,estimate,std_error",
            f"{cfg.k},{cfg.lam:.17g},{samples},{estimate:.17g},{std_error:.17g}",
        ]
        path = _out_dir(out) / "critical_velocity.csv"
        path.write_text("\n".join(lines) + "\n")
    except Exception as exc:
        raise SystemExit(_runtime_fail(exc))
    click.echo(f"v* estimate {estimate:.6g} +/- {std_error:.2g} (wrote {path})")


@main.command("verify-bounds")
@config_opt
@out_opt
@seed_opt
@set_opt
def verify_bounds(config_path, out, seed, overrides):
    """Run one trajectory and check the whole bound chain against it."""
    try:
        cfg = _read_config(config_path, overrides, seed)
    except ConfigError as exc:
        raise SystemExit(_config_fail(exc))
    try:
        checks = io.verify_bounds(cfg)
        path = _out_dir(out) / "bounds_report.txt"
        all_ok = io.write_bounds_report(checks, path)
        click.echo(path.read_text(), nl=False)
    except Exception as exc:
        raise SystemExit(_runtime_fail(exc))
    if not all_ok:
        raise SystemExit(EXIT_BOUND_FAILURE)


def _config_fail(exc) -> int:
    click.echo(f"config error: {exc}", err=True)
    return EXIT_CONFIG_ERROR


def _runtime_fail(exc) -> int:
    click.echo(f"error: {exc}", err=True)
    return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
