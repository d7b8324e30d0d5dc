"""Conserved quantities, relative coordinates and the convergence-bound chain.

The contraction ||v[t+1]|| <= (1 - h phi[t]) ||v[t]|| drives everything:
iterating it yields the series S[tau] of products whose convergence
controls position growth, the minimum-positive-weight lower bound
mu[t] >= A / (B + t^alpha), and the per-term series bounds for the
sub-linear (alpha < 1) and linear (alpha = 1) decay regimes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FlockState, ModelParams
from .spectral import fiedler_noncolored

DIVERGENCE_SUM_LIMIT = 1e6
DIVERGENCE_INCREMENT_FLOOR = 1e-12


class ConsensusReached(ValueError):
    """The flock starts at consensus; the bound machinery is vacuous."""


@dataclass(frozen=True)
class RelativeState:
    """Positions relative to the center of mass and velocities relative to
    the (conserved) initial mean velocity. Both collections sum to zero."""

    t: int
    rel_positions: np.ndarray
    rel_velocities: np.ndarray


@dataclass(frozen=True)
class BoundConstants:
    """Constants of the mu[t] >= A / (B + t^alpha) bound and its offspring.

    gamma enters the alpha < 1 term bound exp(-gamma j^(1-alpha));
    exponent_phi_h_a is the product (mean non-colored Fiedler) * h * A
    governing the alpha = 1 threshold.
    """

    alpha: float
    a_const: float
    b_const: float
    gamma: float | None
    exponent_phi_h_a: float


@dataclass(frozen=True)
class SeriesState:
    tau: int
    partial_sum: float
    running_product: float


def mean_position_velocity(state: FlockState) -> tuple[np.ndarray, np.ndarray]:
    """Arithmetic means of the agent positions and velocities."""
    return state.positions.mean(axis=0), state.velocities.mean(axis=0)


def to_relative(state: FlockState, v_bar_0: np.ndarray) -> RelativeState:
    """Center-of-mass frame coordinates: x_i = X_i - Xbar(t), v_i = V_i - Vbar(0)."""
    x_bar, _ = mean_position_velocity(state)
    return RelativeState(
        t=state.t,
        rel_positions=state.positions - x_bar,
        rel_velocities=state.velocities - np.asarray(v_bar_0, dtype=np.float64),
    )


def flock_norm(vectors: np.ndarray) -> float:
    """Euclidean norm of the stacked 3k-dimensional vector."""
    return float(np.sqrt(np.sum(np.square(vectors))))


def min_positive_weight(weights: np.ndarray) -> float | None:
    """Smallest strictly positive entry (mu), or None for an edgeless graph."""
    positive = weights[weights > 0]
    if positive.size == 0:
        return None
    return float(positive.min())


def bound_constants(
    initial: RelativeState,
    params: ModelParams,
    phi_bar: float,
    spread: float = np.sqrt(2.0),
) -> BoundConstants:
    """Constants A, B (and gamma / the alpha=1 threshold product) from the
    initial relative state.

    A = 1 / (spread h ||v[0]||)^alpha,
    B = ((1 + spread ||x[0]||) / (spread h ||v[0]||))^alpha.

    ``spread`` is the worst-case ratio of the maximum pairwise distance to
    the flock norm, attained by an antipodal agent pair: with it the bound
    mu[t] >= A / (B + t^alpha) holds on every trajectory. spread=1 gives
    the unadjusted constants, valid only when no pairwise distance exceeds
    the flock norm.
    """
    v0 = flock_norm(initial.rel_velocities)
    if v0 == 0.0:
        raise ConsensusReached("initial relative velocity is zero; flocking already holds")
    x0 = flock_norm(initial.rel_positions)
    hv0 = spread * params.h * v0
    a_const = hv0 ** (-params.alpha)
    b_const = ((1.0 + spread * x0) / hv0) ** params.alpha
    exponent = phi_bar * params.h * a_const
    gamma = exponent / (1.0 - params.alpha) if params.alpha < 1.0 else None
    return BoundConstants(
        alpha=params.alpha,
        a_const=a_const,
        b_const=b_const,
        gamma=gamma,
        exponent_phi_h_a=exponent,
    )


def mu_lower_bound(t: int, c: BoundConstants) -> float:
    """A / (B + t^alpha): lower bound on the minimum positive weight at step t."""
    if t < 0:
        raise ValueError("step index must be >= 0")
    return c.a_const / (c.b_const + float(t) ** c.alpha)


def series_partial(phi_history, h: float, tau: int) -> SeriesState:
    """Partial sum S[tau] = sum_{j=1}^{tau-1} prod_{i=0}^{j-1} (1 - h phi[i]),
    accumulated incrementally through the running product."""
    phi_history = np.asarray(phi_history, dtype=np.float64)
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if len(phi_history) < tau - 1:
        raise ValueError(f"need {tau - 1} Fiedler values, got {len(phi_history)}")
    running = 1.0
    total = 0.0
    for j in range(1, tau):
        factor = 1.0 - h * phi_history[j - 1]
        if not 0.0 <= factor <= 1.0 + 1e-12:
            raise ValueError(
                f"contraction factor {factor} outside [0, 1] at index {j - 1}"
            )
        running *= min(factor, 1.0)
        total += running
    return SeriesState(tau=tau, partial_sum=total, running_product=running)


def term_bound_sublinear(j: int, c: BoundConstants) -> float:
    """exp(-gamma j^(1-alpha)): expected product-term bound for alpha < 1."""
    if c.alpha >= 1.0 or c.gamma is None:
        raise ValueError("sub-linear bound requires alpha < 1")
    return float(np.exp(-c.gamma * float(j) ** (1.0 - c.alpha)))


def term_bound_linear(j: int, c: BoundConstants) -> float:
    """((B+1)/(B+j+1))^(phi_bar h A): expected product-term bound for alpha = 1."""
    if c.alpha != 1.0:
        raise ValueError("linear bound requires alpha = 1")
    return float(((c.b_const + 1.0) / (c.b_const + j + 1.0)) ** c.exponent_phi_h_a)


def linear_series_diverges(c: BoundConstants, max_blocks: int = 10_000_000) -> bool:
    """Divergence probe for the alpha = 1 term-bound series.

    Sums doubling blocks (tau, 2 tau]; since the terms decrease, each block
    contributes at least tau * term(2 tau), evaluated in log space so
    arbitrarily slow divergence is still detected. Divergent when the
    partial-sum lower bound passes 1e6 before a block increment drops
    below 1e-12.
    """
    if c.alpha != 1.0:
        raise ValueError("probe applies to the alpha = 1 regime")
    p = c.exponent_phi_h_a
    log_b1 = np.log(c.b_const + 1.0)
    total = 0.0
    log_tau = 0.0
    for _ in range(max_blocks):
        # log term(2 tau) = p * (log(B+1) - log(B + 2 tau + 1))
        log_edge = np.logaddexp(log_b1, np.log(2.0) + log_tau)
        log_block = log_tau + p * (log_b1 - log_edge)
        block = float(np.exp(log_block))
        if block < DIVERGENCE_INCREMENT_FLOOR:
            return False
        total += block
        if total > DIVERGENCE_SUM_LIMIT:
            return True
        log_tau += np.log(2.0)
    raise RuntimeError("divergence probe exhausted its block budget undecided")


def critical_velocity_estimate(
    k: int, lam: float, n_samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo estimate of the expected non-colored Fiedler number
    (the critical initial relative velocity). Returns (mean, standard error)."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    params = ModelParams(k=k, alpha=0.0, lam=lam, h=1.0 / k)
    from .core import sample_failure_mask

    values = np.empty(n_samples)
    for i in range(n_samples):
        values[i] = fiedler_noncolored(sample_failure_mask(params, rng))
    mean = float(values.mean())
    if n_samples == 1:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / np.sqrt(n_samples))


def critical_velocity_exact(k: int, lam: float, max_k: int = 5) -> float:
    """Exact expected non-colored Fiedler number by enumerating all
    2^(k(k-1)/2) edge subsets. Limited to small k."""
    if k > max_k:
        raise ValueError(f"exhaustive enumeration limited to k <= {max_k}")
    n_pairs = k * (k - 1) // 2
    iu = np.triu_indices(k, 1)
    total = 0.0
    for bits in range(1 << n_pairs):
        mask = np.zeros((k, k))
        edges = 0
        for e in range(n_pairs):
            if bits >> e & 1:
                mask[iu[0][e], iu[1][e]] = 1.0
                edges += 1
        mask += mask.T
        prob = (1.0 - lam) ** edges * lam ** (n_pairs - edges)
        if prob > 0.0:
            total += prob * fiedler_noncolored(mask)
    return total


def check_contraction(v_norms, phis, h: float, slack: float = 1e-9) -> bool:
    """Per-step contraction ||v[t+1]|| <= (1 - h phi[t]) ||v[t]|| + slack."""
    v_norms = np.asarray(v_norms, dtype=np.float64)
    phis = np.asarray(phis, dtype=np.float64)
    return bool(
        np.all(v_norms[1:] <= (1.0 - h * phis[: len(v_norms) - 1]) * v_norms[:-1] + slack)
    )


def check_velocity_series_bound(v_norms, phis, h: float, slack: float = 1e-9) -> bool:
    """sum_{j=0}^{tau-1} ||v[j]|| <= ||v[0]|| (1 + S[tau]) for every recorded tau."""
    v_norms = np.asarray(v_norms, dtype=np.float64)
    v0 = v_norms[0]
    cumulative = np.cumsum(v_norms)
    running = 1.0
    s = 0.0
    for tau in range(1, len(v_norms) + 1):
        if cumulative[tau - 1] > v0 * (1.0 + s) + slack:
            return False
        if tau <= len(phis):
            running *= 1.0 - h * phis[tau - 1]
            s += running
    return True
