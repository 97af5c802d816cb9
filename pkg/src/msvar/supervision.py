"""Label-side losses: cross-entropy and the gated semi-supervised combination.

The combined loss is alpha * CE + beta * MS, where alpha is 1 for labeled
inputs and 0 otherwise, and the MS term is the unsupervised relaxed loss.
Pixels carrying the ignore index (255) are excluded from the cross-entropy
average.
"""

from dataclasses import dataclass, field

import numpy as np

from .grid import as_image
from .softseg import MsConfig, ms_loss

IGNORE_INDEX = 255

# Floor inside the log; keeps the loss finite when a membership underflows.
LOG_CLAMP = 1e-12


@dataclass
class CombinedLossConfig:
    beta: float = 1e-6
    labeled: bool = True
    ms: MsConfig = field(default_factory=MsConfig)

    def validate(self):
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")


def cross_entropy(seg, labels, ignore=None):
    """Mean negative log-membership of the true class over non-ignored pixels.

    labels is an (H, W) int map; pixels equal to IGNORE_INDEX, or flagged in
    the optional boolean `ignore` mask, do not contribute.
    """
    y = seg.memberships
    labels = np.asarray(labels)
    if labels.shape != y.shape[1:]:
        raise ValueError(f"labels {labels.shape} do not match segmentation {y.shape}")
    keep = labels != IGNORE_INDEX
    if ignore is not None:
        keep &= ~np.asarray(ignore, dtype=bool)
    if not keep.any():
        raise ValueError("no pixels left after applying the ignore mask")
    if labels[keep].min() < 0 or labels[keep].max() >= y.shape[0]:
        raise ValueError("label indices out of range for the segmentation")
    ii, jj = np.nonzero(keep)
    picked = y[labels[ii, jj], ii, jj]
    return float(-np.mean(np.log(np.maximum(picked, LOG_CLAMP))))


def combined_loss(x, seg, labels, cfg):
    """Gated total alpha * CE + beta * MS; returns (total, ce, ms).

    alpha is 1 when cfg.labeled (labels required) and 0 otherwise, in which
    case the CE component is reported as 0.
    """
    cfg.validate()
    x = as_image(x)
    if cfg.labeled and labels is None:
        raise ValueError("labeled=True requires a label map")
    ms_total, _, _ = ms_loss(x, seg, cfg.ms)
    if cfg.labeled:
        ce = cross_entropy(seg, labels)
        alpha = 1.0
    else:
        ce = 0.0
        alpha = 0.0
    return alpha * ce + cfg.beta * ms_total, ce, ms_total
