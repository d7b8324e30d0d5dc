"""Reproducible trajectory generation, Monte Carlo sweeps and decay fitting.

Every stochastic draw comes from a numpy PCG64 generator seeded through
``SeedSequence(entropy=master_seed, spawn_key=(cell_index, run_index))``,
so sweep cells and runs have non-overlapping streams and identical
configurations reproduce bit-identical output.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import analysis, core, spectral

RNG_ALGORITHM = (
    "numpy PCG64 via SeedSequence(entropy=master_seed, spawn_key=(cell, run)); "
    "normal variates via Generator.standard_normal (ziggurat)"
)

LOG_UNDERFLOW = 1e-300
DEFAULT_HORIZON = 10_000
DEFAULT_FLOCK_EPSILON = 1e-6


@dataclass(frozen=True)
class ExperimentConfig:
    """One run (or sweep cell) of the failure-perturbed flocking model.

    ``ic`` is either the string "standard-normal" or an explicit
    (positions, velocities) pair of (k, 3) arrays. ``stop_epsilon``, when
    set, stops the run once the relative-velocity norm drops below it.
    ``record_spectral`` controls whether per-step Fiedler numbers,
    connectivity and mu are computed (the dominant cost per step).
    """

    k: int
    alpha: float
    lam: float
    h: float | None = None
    horizon: int = DEFAULT_HORIZON
    master_seed: int = 0
    ic: object = "standard-normal"
    record_stride: int = 1
    record_spectral: bool = True
    stop_epsilon: float | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    @property
    def step_size(self) -> float:
        return self.h if self.h is not None else 1.0 / self.k

    def params(self) -> core.ModelParams:
        return core.validate_timestep(
            core.ModelParams(k=self.k, alpha=self.alpha, lam=self.lam, h=self.step_size)
        )


@dataclass
class TrajectoryRecord:
    """Per-step time series of one run.

    ``phi[t]`` is the colored-graph Fiedler number of the weight matrix
    applied at step t, so with stride 1 consecutive rows satisfy
    v_norm[t+1] <= (1 - h phi[t]) v_norm[t]. Spectral columns are NaN
    when spectral recording is off; mu is NaN at edgeless steps;
    log_v_norm is NaN once the norm underflows.
    """

    config: ExperimentConfig
    t: np.ndarray
    v_norm: np.ndarray
    log_v_norm: np.ndarray
    phi: np.ndarray
    phi_bar: np.ndarray
    connected: np.ndarray
    mu: np.ndarray
    s_partial: np.ndarray
    initial_state: core.FlockState
    final_state: core.FlockState
    v_bar_0: np.ndarray


@dataclass(frozen=True)
class CellSummary:
    k: int
    alpha: float
    lam: float
    n_runs: int
    flocking_fraction: float
    median_flocking_time: float  # NaN when no run flocked
    mean_slope: float
    slope_std: float


@dataclass(frozen=True)
class SweepSummary:
    cells: list[CellSummary] = field(default_factory=list)


def derive_rng(master_seed: int, cell: int = 0, run: int = 0) -> np.random.Generator:
    """The stream-derivation function (see RNG_ALGORITHM)."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed, spawn_key=(cell, run))
    )


def sample_initial_state(config: ExperimentConfig, rng: np.random.Generator) -> core.FlockState:
    """Initial state per the configured ic setting.

    Standard-normal draws all 6k coordinates independently N(0, 1);
    positions are drawn before velocities.
    """
    if isinstance(config.ic, str):
        if config.ic != "standard-normal":
            raise ValueError(f"unknown initial-condition setting {config.ic!r}")
        pos = rng.standard_normal((config.k, 3))
        vel = rng.standard_normal((config.k, 3))
        return core.FlockState(0, pos, vel)
    pos, vel = config.ic
    pos = np.asarray(pos, dtype=np.float64)
    vel = np.asarray(vel, dtype=np.float64)
    if pos.shape != (config.k, 3) or vel.shape != (config.k, 3):
        raise ValueError(
            f"explicit initial conditions must be (k, 3)=({config.k}, 3) arrays, "
            f"got {pos.shape} and {vel.shape}"
        )
    return core.FlockState(0, pos, vel)


def run_trajectory(config: ExperimentConfig, cell: int = 0, run: int = 0) -> TrajectoryRecord:
    """Step the system for ``horizon`` steps (or until ``stop_epsilon``),
    recording one row every ``record_stride`` steps."""
    params = config.params()
    h = params.h
    rng = derive_rng(config.master_seed, cell, run)
    state = sample_initial_state(config, rng)
    initial_state = state
    _, v_bar_0 = analysis.mean_position_velocity(state)

    rows_t, rows_v, rows_phi, rows_phibar = [], [], [], []
    rows_conn, rows_mu, rows_s = [], [], []
    running_product = 1.0
    s_history = [0.0, 0.0]  # s_history[tau] = S[tau]; S[0] degenerate, S[1] = 0
    for t in range(config.horizon + 1):
        v_norm = analysis.flock_norm(state.velocities - v_bar_0)
        if not np.isfinite(v_norm):
            raise FloatingPointError(f"numeric overflow at step {t}")
        recording = t % config.record_stride == 0 or t == config.horizon
        last = t == config.horizon or (
            config.stop_epsilon is not None and v_norm < config.stop_epsilon
        )
        if last:
            recording = True
        phi = phi_bar = mu = np.nan
        conn = np.nan
        if not last:
            mask = core.sample_failure_mask(params, rng)
            weights = core.weight_matrix(state, mask, params)
            if config.record_spectral:
                phi = spectral.fiedler(weights)
                phi_bar = spectral.fiedler_noncolored(mask)
                conn = float(spectral.is_connected(mask))
                mpw = analysis.min_positive_weight(weights)
                mu = np.nan if mpw is None else mpw
        if recording:
            rows_t.append(t)
            rows_v.append(v_norm)
            rows_phi.append(phi)
            rows_phibar.append(phi_bar)
            rows_conn.append(conn)
            rows_mu.append(mu)
            rows_s.append(s_history[t] if config.record_spectral else np.nan)
        if last:
            break
        if config.record_spectral:
            running_product *= 1.0 - h * phi
            s_history.append(s_history[-1] + running_product)
        state = core.advance(state, weights, h)

    v_norm_arr = np.array(rows_v)
    with np.errstate(divide="ignore"):
        log_v = np.where(v_norm_arr >= LOG_UNDERFLOW, np.log(v_norm_arr), np.nan)
    return TrajectoryRecord(
        config=config,
        t=np.array(rows_t, dtype=np.int64),
        v_norm=v_norm_arr,
        log_v_norm=log_v,
        phi=np.array(rows_phi),
        phi_bar=np.array(rows_phibar),
        connected=np.array(rows_conn),
        mu=np.array(rows_mu),
        s_partial=np.array(rows_s),
        initial_state=initial_state,
        final_state=state,
        v_bar_0=v_bar_0,
    )


def detect_flocking(record: TrajectoryRecord, epsilon: float) -> int | None:
    """First recorded step with relative-velocity norm below epsilon."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    hits = np.nonzero(record.v_norm < epsilon)[0]
    if hits.size == 0:
        return None
    return int(record.t[hits[0]])


def fit_decay_rate(record: TrajectoryRecord, window: tuple[int, int] | None = None) -> tuple[float, float]:
    """Least-squares slope of log ||v[t]|| against t (per step) and its r^2."""
    mask = np.isfinite(record.log_v_norm)
    if window is not None:
        lo, hi = window
        mask &= (record.t >= lo) & (record.t < hi)
    if mask.sum() < 10:
        raise ValueError("need at least 10 recorded points with positive norm")
    t = record.t[mask].astype(np.float64)
    y = record.log_v_norm[mask]
    slope, intercept = np.polyfit(t, y, 1)
    fitted = slope * t + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), r_squared


def monte_carlo_sweep(
    grid: list[ExperimentConfig],
    n_runs: int,
    flock_epsilon: float = DEFAULT_FLOCK_EPSILON,
) -> SweepSummary:
    """Run each grid cell ``n_runs`` times and aggregate flocking statistics.

    Per-run streams derive from (master_seed, cell index, run index), so the
    summary is independent of execution order.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    cells = []
    for ci, cfg in enumerate(grid):
        times = []
        slopes = []
        flocked = 0
        for ri in range(n_runs):
            try:
                record = run_trajectory(cfg, cell=ci, run=ri)
            except Exception as exc:
                raise RuntimeError(
                    f"sweep cell {ci} (k={cfg.k}, alpha={cfg.alpha}, lam={cfg.lam}), "
                    f"run {ri} failed"
                ) from exc
            when = detect_flocking(record, flock_epsilon)
            if when is not None:
                flocked += 1
                times.append(when)
            try:
                slope, _ = fit_decay_rate(record)
                slopes.append(slope)
            except ValueError:
                pass
        cells.append(
            CellSummary(
                k=cfg.k,
                alpha=cfg.alpha,
                lam=cfg.lam,
                n_runs=n_runs,
                flocking_fraction=flocked / n_runs,
                median_flocking_time=float(np.median(times)) if times else np.nan,
                mean_slope=float(np.mean(slopes)) if slopes else np.nan,
                slope_std=float(np.std(slopes, ddof=1)) if len(slopes) > 1 else 0.0,
            )
        )
    return SweepSummary(cells=cells)
