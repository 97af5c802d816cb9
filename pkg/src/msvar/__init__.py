"""Variational image segmentation on regular grids.

Softmax-relaxed piecewise-constant (Mumford-Shah style) minimization over
per-pixel logits, optional multiplicative bias-field correction, a classical
multiphase level-set solver, supervised loss arithmetic, and an evaluation
metric suite.
"""

from .bias import bias_centroids, bias_ms_loss, minimize_ms_bias
from .errors import ConvergenceError
from .grid import grad_forward, tv_smooth, tv_smooth_grad
from .levelset import (
    LevelSetState,
    delta_eps,
    evolve_step,
    heaviside_eps,
    levelset_energy,
    region_means,
    segment_levelset,
)
from .metrics import ConfusionCounts, clustering_metrics, overlap_metrics
from .phantoms import make_phantom
from .softseg import (
    MsConfig,
    SoftSegmentation,
    fixed_point_step,
    hard_mask,
    minimize_ms,
    ms_loss,
    ms_loss_grad,
    soft_centroids,
    softmax,
)
from .supervision import CombinedLossConfig, combined_loss, cross_entropy

__version__ = "0.1.0"

__all__ = [
    "CombinedLossConfig",
    "ConfusionCounts",
    "ConvergenceError",
    "LevelSetState",
    "MsConfig",
    "SoftSegmentation",
    "bias_centroids",
    "bias_ms_loss",
    "clustering_metrics",
    "combined_loss",
    "cross_entropy",
    "delta_eps",
    "evolve_step",
    "fixed_point_step",
    "grad_forward",
    "hard_mask",
    "heaviside_eps",
    "levelset_energy",
    "make_phantom",
    "minimize_ms",
    "minimize_ms_bias",
    "ms_loss",
    "ms_loss_grad",
    "overlap_metrics",
    "region_means",
    "segment_levelset",
    "soft_centroids",
    "softmax",
    "tv_smooth",
    "tv_smooth_grad",
]
