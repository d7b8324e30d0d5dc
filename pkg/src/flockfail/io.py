"""Serialization of trajectories, sweeps and bound-verification reports.

Plain comma-separated tables plus a JSON metadata sidecar, so any plotting
tool can consume the output. Floats are written with 17 significant digits
for lossless double round-trips; missing values are empty fields.
"""
from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, analysis, core, spectral
from .experiment import (
    RNG_ALGORITHM,
    ExperimentConfig,
    SweepSummary,
    TrajectoryRecord,
    derive_rng,
    run_trajectory,
)

TRAJECTORY_HEADER = "t,v_norm,log_v_norm,fiedler_colored,fiedler_plain,connected,mu,S_partial"
SWEEP_HEADER = (
    "cell,k,alpha,lambda,n_runs,flocking_fraction,median_flocking_time,"
    "mean_slope,slope_std"
)

BOUND_CHECK_SLACK = 1e-9


def _fmt(x) -> str:
    """17-significant-digit float field; empty for NaN/None, bare int for ints."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return ""
    return format(x, ".17g")


def config_metadata(config: ExperimentConfig) -> dict:
    ic = config.ic
    if not isinstance(ic, str):
        ic = {"positions": np.asarray(ic[0]).tolist(), "velocities": np.asarray(ic[1]).tolist()}
    return {
        "config": {
            "k": config.k,
            "alpha": config.alpha,
            "lambda": config.lam,
            "h": config.step_size,
            "horizon": config.horizon,
            "master_seed": config.master_seed,
            "ic": ic,
            "record_stride": config.record_stride,
            "record_spectral": config.record_spectral,
            "stop_epsilon": config.stop_epsilon,
        },
        "rng": RNG_ALGORITHM,
        "version": __version__,
    }


def write_trajectory(record: TrajectoryRecord, path) -> Path:
    """Write a trajectory table and its ``.meta.json`` sidecar."""
    path = Path(path)
    lines = [TRAJECTORY_HEADER]
    for i in range(len(record.t)):
        lines.append(
            ",".join(
                [
                    str(int(record.t[i])),
                    _fmt(record.v_norm[i]),
                    _fmt(record.log_v_norm[i]),
                    _fmt(record.phi[i]),
                    _fmt(record.phi_bar[i]),
                    "" if np.isnan(record.connected[i]) else str(int(record.connected[i])),
                    _fmt(record.mu[i]),
                    _fmt(record.s_partial[i]),
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n")
    sidecar = path.with_suffix(path.suffix + ".meta.json")
    sidecar.write_text(json.dumps(config_metadata(record.config), indent=2, sort_keys=True) + "\n")
    return path


def read_trajectory(path) -> dict[str, np.ndarray]:
    """Parse a trajectory table back into named columns (NaN for blanks)."""
    lines = Path(path).read_text().strip().split("\n")
    if lines[0] != TRAJECTORY_HEADER:
        raise ValueError(f"unexpected header {lines[0]!r}")
    names = TRAJECTORY_HEADER.split(",")
    columns = {name: [] for name in names}
    for line in lines[1:]:
        for name, fieldval in zip(names, line.split(",")):
            columns[name].append(float(fieldval) if fieldval else np.nan)
    return {name: np.array(vals) for name, vals in columns.items()}


def write_sweep(summary: SweepSummary, path) -> Path:
    """Write one row per sweep cell, ordered by cell index."""
    path = Path(path)
    lines = [SWEEP_HEADER]
    for ci, cell in enumerate(summary.cells):
        lines.append(
            ",".join(
                [
                    str(ci),
                    str(cell.k),
                    _fmt(cell.alpha),
                    _fmt(cell.lam),
                    str(cell.n_runs),
                    _fmt(cell.flocking_fraction),
                    _fmt(cell.median_flocking_time),
                    _fmt(cell.mean_slope),
                    _fmt(cell.slope_std),
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n")
    return path


def verify_bounds(config: ExperimentConfig) -> list[tuple[str, bool, str]]:
    """Run one trajectory and evaluate the full bound chain on it.

    Returns (check name, passed, detail) triples covering: per-step
    contraction, the mu lower bound, the colored-vs-noncolored Fiedler
    inequality, the degree bound, the velocity-series bound and linear
    position growth.
    """
    config = replace(config, record_stride=1, record_spectral=True)
    params = config.params()
    record = run_trajectory(config)
    h = params.h

    checks: list[tuple[str, bool, str]] = []
    steps = len(record.t) - 1

    ok = analysis.check_contraction(record.v_norm, record.phi, h, BOUND_CHECK_SLACK)
    checks.append(("contraction", ok, f"{steps} steps"))

    rel0 = analysis.to_relative(record.initial_state, record.v_bar_0)
    v0 = analysis.flock_norm(rel0.rel_velocities)
    x0 = analysis.flock_norm(rel0.rel_positions)
    if v0 == 0.0:
        checks.append(("mu_lower_bound", True, "consensus start, vacuous"))
    else:
        # phi_bar only enters gamma, which the mu bound does not use
        consts = analysis.bound_constants(rel0, params, phi_bar=1.0)
        worst = np.inf
        ok = True
        for i in range(len(record.t)):
            if np.isnan(record.mu[i]):
                continue
            gap = record.mu[i] - analysis.mu_lower_bound(int(record.t[i]), consts)
            worst = min(worst, gap)
            if gap < -BOUND_CHECK_SLACK:
                ok = False
        checks.append(("mu_lower_bound", ok, f"worst slack {worst:.3e}"))

    ok = bool(
        np.all(
            record.phi[:-1]
            >= record.phi_bar[:-1] * np.nan_to_num(record.mu[:-1]) - BOUND_CHECK_SLACK
        )
    ) if steps > 0 else True
    checks.append(("fiedler_product_bound", ok, "phi >= varphi * mu per step"))

    # re-walk the trajectory (same stream) for the degree bound and
    # position growth, which need the intermediate weight matrices and states
    state = record.initial_state
    rng = derive_rng(config.master_seed, 0, 0)
    if isinstance(config.ic, str):
        rng.standard_normal((config.k, 3))
        rng.standard_normal((config.k, 3))
    degree_ok = True
    pos_ok = True
    for t in range(steps):
        mask = core.sample_failure_mask(params, rng)
        weights = core.weight_matrix(state, mask, params)
        if not spectral.degree_bound_check(weights, BOUND_CHECK_SLACK):
            degree_ok = False
        state = core.advance(state, weights, h)
        rel = analysis.to_relative(state, record.v_bar_0)
        if analysis.flock_norm(rel.rel_positions) > x0 + (t + 1) * h * v0 + BOUND_CHECK_SLACK:
            pos_ok = False
    checks.append(("degree_bound", degree_ok, f"{steps} steps"))
    checks.append(("position_linear_growth", pos_ok, f"{steps} steps"))

    ok = analysis.check_velocity_series_bound(record.v_norm, record.phi, h, BOUND_CHECK_SLACK)
    checks.append(("velocity_series_bound", ok, "all recorded tau"))
    return checks


def write_bounds_report(checks: list[tuple[str, bool, str]], path) -> bool:
    """Write pass/fail lines; returns True when every check passed."""
    path = Path(path)
    lines = []
    all_ok = True
    for name, ok, detail in checks:
        all_ok &= ok
        lines.append(f"{'PASS' if ok else 'FAIL'} {name} ({detail})")
    lines.append(f"{'PASS' if all_ok else 'FAIL'} overall")
    path.write_text("\n".join(lines) + "\n")
    return all_ok
