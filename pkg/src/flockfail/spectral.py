"""Graph Laplacians, symmetric eigenvalues and Fiedler numbers.

The Fiedler number (algebraic connectivity) is the second smallest
eigenvalue of the graph Laplacian; it vanishes exactly when the graph is
disconnected. Both the weighted ("colored") interaction graph and its
0-1 skeleton are handled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from numpy.typing import NDArray

Array = NDArray[np.float64]

SYMMETRY_TOL = 1e-12
ZERO_CLAMP_TOL = 1e-9


class ConvergenceError(RuntimeError):
    """Eigensolver failed to reduce off-diagonal mass within the sweep budget."""

    def __init__(self, residual: float, sweeps: int):
        super().__init__(
            f"Jacobi sweep budget ({sweeps}) exhausted, off-diagonal residual {residual:.3e}"
        )
        self.residual = residual
        self.sweeps = sweeps


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: Array  # ascending
    fiedler: float

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=np.float64)
        if np.any(np.diff(ev) < 0):
            raise ValueError("eigenvalues must be sorted ascending")
        object.__setattr__(self, "eigenvalues", ev)


def laplacian(weights: Array) -> Array:
    """L = D - A with d_ii = sum_j a_ij. Rows sum to zero."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
        raise ValueError(f"weights must be square, got shape {weights.shape}")
    if np.max(np.abs(weights - weights.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError("weight matrix is not symmetric")
    lap = -weights.copy()
    np.fill_diagonal(lap, 0.0)
    np.fill_diagonal(lap, weights.sum(axis=1) - np.diag(weights))
    return lap


@njit(cache=True)
def _off_mass(a):
    n = a.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                total += a[i, j] * a[i, j]
    return np.sqrt(total)


@njit(cache=True)
def _jacobi_sweeps(a, tol, max_sweeps):
    """Cyclic Jacobi rotations in place; returns the final off-diagonal mass."""
    n = a.shape[0]
    skip = tol / (10.0 * n)  # pivots this small cannot block convergence at tol
    for _ in range(max_sweeps):
        if _off_mass(a) < tol:
            return _off_mass(a)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                sgn = 1.0 if theta >= 0.0 else -1.0
                t = sgn / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for i in range(n):
                    aip = a[i, p]
                    aiq = a[i, q]
                    a[i, p] = c * aip - s * aiq
                    a[i, q] = s * aip + c * aiq
                for i in range(n):
                    api = a[p, i]
                    aqi = a[q, i]
                    a[p, i] = c * api - s * aqi
                    a[q, i] = s * api + c * aqi
                a[p, q] = 0.0
                a[q, p] = 0.0
    return _off_mass(a)


def symmetric_eigenvalues(matrix: Array, tol: float = 1e-10, max_sweeps: int = 100) -> Array:
    """All eigenvalues of a real symmetric matrix, ascending.

    Cyclic Jacobi rotations; converged when the off-diagonal Frobenius
    mass drops below ``tol``.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError("matrix is not symmetric")
    if n == 1:
        return a[0, :1].copy()
    residual = float(_jacobi_sweeps(a, tol, max_sweeps))
    if residual >= tol:
        raise ConvergenceError(residual, max_sweeps)
    return np.sort(np.diag(a))


def spectrum(weights: Array, tol: float = ZERO_CLAMP_TOL) -> SpectralResult:
    """Laplacian spectrum of a weight matrix, with the Fiedler number clamped
    to 0 when it is within ``tol`` of 0."""
    ev = symmetric_eigenvalues(laplacian(weights))
    f = float(ev[1])
    if abs(f) < tol:
        f = 0.0
    return SpectralResult(eigenvalues=ev, fiedler=f)


def fiedler(weights: Array, tol: float = ZERO_CLAMP_TOL) -> float:
    """Second smallest Laplacian eigenvalue of the weighted graph."""
    return spectrum(weights, tol).fiedler


def fiedler_noncolored(mask: Array, tol: float = ZERO_CLAMP_TOL) -> float:
    """Fiedler number of the 0-1 graph underlying a link mask."""
    return fiedler(np.asarray(mask, dtype=np.float64), tol)


def is_connected(mask: Array) -> bool:
    """Combinatorial connectivity of the 0-1 graph (breadth-first search)."""
    mask = np.asarray(mask)
    k = mask.shape[0]
    seen = np.zeros(k, dtype=bool)
    frontier = [0]
    seen[0] = True
    while frontier:
        i = frontier.pop()
        for j in np.nonzero(mask[i] > 0)[0]:
            if not seen[j]:
                seen[j] = True
                frontier.append(int(j))
    return bool(seen.all())


def degree_bound_check(weights: Array, slack: float = 1e-9) -> bool:
    """Check phi <= k/(k-1) * min weighted degree (Fiedler degree bound)."""
    weights = np.asarray(weights, dtype=np.float64)
    k = weights.shape[0]
    phi = fiedler(weights)
    return phi <= k / (k - 1) * float(weights.sum(axis=1).min()) + slack


def fiedler_scaling_check(weights: Array, mask: Array, slack: float = 1e-9) -> bool:
    """Check phi >= varphi * mu, relating the colored and non-colored
    Fiedler numbers through the minimum positive weight mu.

    Degenerates to 0 >= 0 when the graph has no edges.
    """
    weights = np.asarray(weights, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if not np.array_equal(weights > 0, mask > 0):
        raise ValueError("weights and mask have different zero patterns")
    positive = weights[weights > 0]
    if positive.size == 0:
        return True
    mu = float(positive.min())
    return fiedler(weights) >= fiedler_noncolored(mask) * mu - slack
