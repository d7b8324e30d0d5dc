"""Cucker-Smale flocking under random pairwise link failures.

Simulation of the discrete-time dynamics, Fiedler-number spectral
machinery, the convergence-bound chain, and a reproducible experiment
harness with a CLI.
"""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    FlockState,
    ModelParams,
    cs_weight,
    sample_failure_mask,
    step,
    step_matrix_form,
    validate_timestep,
    weight_matrix,
)
from .spectral import fiedler, fiedler_noncolored, is_connected, laplacian  # noqa: F401
