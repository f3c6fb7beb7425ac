"""Hybrid data- and model-driven angular power spectrum estimation."""

from ._jit import JIT_ENABLED
from .estimators import (
    HaugazeauConfig,
    RegularizedConfig,
    haugazeau_estimate,
    haugazeau_q,
    prox_g,
    regularized_estimate,
)
from .forward_model import (
    ArrayConfig,
    build_grid,
    build_ula_operator,
    devectorize,
    toeplitz_project,
    vectorize,
)
from .solvers import FeasibilityProblem, nnls, pocs_baseline, project_affine, project_cone
from .statistics import build_metric, compute_statistics
from .synthesis import ApsModelConfig, ChannelSimConfig, sample_aps, simulate_sample_covariance

__version__ = "0.1.0"
