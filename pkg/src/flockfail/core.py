"""Discrete-time Cucker-Smale dynamics with random pairwise link failures.

Agents adjust velocities toward a weighted mean of the other agents'
velocities; each pair of agents can independently fail to communicate at
each step with probability ``lam``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]


@dataclass(frozen=True)
class ModelParams:
    """Static parameters of the failure-perturbed model.

    Attributes:
        k: number of agents (>= 2).
        alpha: distance-decay exponent of the coupling weights, in [0, 1].
        lam: per-step, per-pair link failure probability, in [0, 1].
        h: time step.
    """

    k: int
    alpha: float
    lam: float
    h: float

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"need at least 2 agents, got k={self.k}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.h <= 0.0:
            raise ValueError(f"h must be positive, got {self.h}")


@dataclass(frozen=True)
class FlockState:
    """Positions and velocities of k agents in R^3 at one time step.

    Immutable snapshot: the stored arrays are read-only copies.
    """

    t: int
    positions: Array  # (k, 3)
    velocities: Array  # (k, 3)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64)
        vel = np.array(self.velocities, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must have shape (k, 3), got {pos.shape}")
        if vel.shape != pos.shape:
            raise ValueError(
                f"velocities shape {vel.shape} does not match positions {pos.shape}"
            )
        if pos.shape[0] < 2:
            raise ValueError("need at least 2 agents")
        if self.t < 0:
            raise ValueError(f"step index must be >= 0, got {self.t}")
        if not (np.isfinite(pos).all() and np.isfinite(vel).all()):
            raise ValueError("non-finite coordinate in state")
        pos.setflags(write=False)
        vel.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)

    @property
    def k(self) -> int:
        return self.positions.shape[0]


def validate_timestep(params: ModelParams) -> ModelParams:
    """Enforce 0 < h <= 1/k.

    This guarantees the velocity update is a convex combination of the
    time-t velocities (every coefficient nonnegative, rows summing to 1).
    """
    if params.h > 1.0 / params.k:
        raise ValueError(
            f"time step h={params.h} exceeds 1/k={1.0 / params.k} (k={params.k})"
        )
    return params


def cs_weight(distance, alpha: float):
    """Coupling weight (1 + distance)^(-alpha); 1 at distance 0."""
    distance = np.asarray(distance, dtype=np.float64)
    if np.any(distance < 0):
        raise ValueError("distance must be nonnegative")
    out = (1.0 + distance) ** (-alpha)
    return float(out) if out.ndim == 0 else out


def sample_failure_mask(params: ModelParams, rng: np.random.Generator) -> Array:
    """Draw a symmetric 0-1 link mask.

    One Bernoulli draw per unordered pair, mirrored; an entry is 1
    (link alive) with probability 1 - lam. Diagonal is zero.
    Pairs are consumed in row-major upper-triangular order.
    """
    k = params.k
    iu = np.triu_indices(k, 1)
    alive = (rng.random(len(iu[0])) >= params.lam).astype(np.float64)
    mask = np.zeros((k, k))
    mask[iu] = alive
    return mask + mask.T


def pairwise_distances(positions: Array) -> Array:
    """Euclidean distance matrix of the agent positions."""
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt(np.einsum("ijl,ijl->ij", diff, diff))


def weight_matrix(state: FlockState, mask: Array, params: ModelParams) -> Array:
    """Failure-masked coupling weights a_ij = mask_ij * (1 + d_ij)^(-alpha)."""
    if mask.shape != (state.k, state.k):
        raise ValueError(f"mask shape {mask.shape} does not match k={state.k}")
    dist = pairwise_distances(state.positions)
    weights = mask * (1.0 + dist) ** (-params.alpha)
    np.fill_diagonal(weights, 0.0)
    return weights


def advance(state: FlockState, weights: Array, h: float) -> FlockState:
    """One step given precomputed weights (simultaneous update from time t)."""
    pos = state.positions + h * state.velocities
    coupling = weights @ state.velocities \
        - weights.sum(axis=1)[:, None] * state.velocities
    vel = state.velocities + h * coupling
    return FlockState(state.t + 1, pos, vel)


def step(state: FlockState, mask: Array, params: ModelParams) -> FlockState:
    """One step of the componentwise dynamics:

    X_i(t+h) = X_i(t) + h V_i(t)
    V_i(t+h) = V_i(t) + h sum_j a_ij (V_j(t) - V_i(t))
    """
    return advance(state, weight_matrix(state, mask, params), params.h)


def step_matrix_form(state: FlockState, laplacian: Array, params: ModelParams) -> FlockState:
    """One step in matrix form: V(t+h) = (Id - h L) V(t), per coordinate axis."""
    if laplacian.shape != (state.k, state.k):
        raise ValueError(
            f"laplacian shape {laplacian.shape} does not match k={state.k}"
        )
    pos = state.positions + params.h * state.velocities
    vel = state.velocities - params.h * (laplacian @ state.velocities)
    return FlockState(state.t + 1, pos, vel)
