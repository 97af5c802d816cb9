"""Piecewise-constant segmentation by direct minimization over per-pixel logits.

The discrete labeling is relaxed through a softmax: memberships y_n are the
softmax of logit fields z_n, which keeps the partition-of-unity constraint
satisfied by construction. The objective is

    sum_n sum_r ||x(r) - c_n||^2 y_n(r)  +  lambda * sum_n TV(y_n)

with c_n the membership-weighted class means, minimized by alternating
centroid refreshes with gradient steps on the logits.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .grid import EPS_DEN, as_image, curvature_divergence, tv_smooth, tv_smooth_grad


@dataclass
class MsConfig:
    """Solver settings; defaults are the package defaults, not tuned per image."""

    num_classes: int = 2
    lambda_tv: float = 1e-3
    step_size: float = 0.5
    max_iters: int = 500
    rel_tol: float = 1e-6
    tv_eps: float = 1e-8
    seed: int = 0
    line_search: bool = True

    def validate(self):
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.lambda_tv < 0:
            raise ValueError(f"lambda_tv must be >= 0, got {self.lambda_tv}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol <= 0:
            raise ValueError(f"rel_tol must be > 0, got {self.rel_tol}")
        if self.tv_eps <= 0:
            raise ValueError(f"tv_eps must be > 0, got {self.tv_eps}")


def softmax(logits):
    """Per-pixel softmax over the class axis of an (N, H, W) logit stack.

    Computed with max-subtraction so large logits cannot overflow.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 3 or z.shape[0] < 2:
        raise ValueError(f"expected (N, H, W) logits with N >= 2, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits contain non-finite values")
    shifted = z - z.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


@dataclass(frozen=True)
class SoftSegmentation:
    """Logit fields plus the memberships derived from them.

    Memberships are always the softmax of the logits; build instances through
    from_logits so the two can never drift apart.
    """

    logits: np.ndarray       # (N, H, W)
    memberships: np.ndarray  # (N, H, W), rows sum to 1 per pixel

    @classmethod
    def from_logits(cls, logits):
        y = softmax(logits)
        return cls(logits=np.asarray(logits, dtype=np.float64), memberships=y)

    @property
    def num_classes(self):
        return self.logits.shape[0]


def soft_centroids(x, memberships):
    """Membership-weighted mean value of each class, per channel.

    c[n, ch] = sum_r x(r, ch) y_n(r) / (sum_r y_n(r) + EPS_DEN); the guard
    keeps (near-)empty classes finite.
    """
    x = as_image(x)
    y = np.asarray(memberships, dtype=np.float64)
    if y.ndim != 3 or y.shape[1:] != x.shape[:2]:
        raise ValueError(f"memberships {y.shape} do not match image {x.shape}")
    num = np.tensordot(y, x, axes=([1, 2], [0, 1]))  # (N, C)
    den = y.sum(axis=(1, 2)) + EPS_DEN
    return num / den[:, None]


def _sq_dists(x, centroids):
    """Per-pixel squared Euclidean distance to each centroid, shape (N, H, W)."""
    diff = x[None, :, :, :] - centroids[:, None, None, :]
    return np.einsum("nijc,nijc->nij", diff, diff)


def _loss_terms(x, y, centroids, cfg):
    data = float(np.sum(_sq_dists(x, centroids) * y))
    tv = cfg.lambda_tv * sum(tv_smooth(y[n], cfg.tv_eps) for n in range(y.shape[0]))
    return data + tv, data, tv


def ms_loss(x, seg, cfg):
    """Relaxed piecewise-constant loss; returns (loss, data_term, tv_term).

    Centroids are recomputed internally from the current memberships.
    """
    x = as_image(x)
    y = seg.memberships
    if y.shape[1:] != x.shape[:2]:
        raise ValueError(f"segmentation {y.shape} does not match image {x.shape}")
    c = soft_centroids(x, y)
    return _loss_terms(x, y, c, cfg)


def _chain_softmax(y, grad_y):
    """Pull a gradient w.r.t. memberships back through the softmax Jacobian."""
    inner = np.sum(grad_y * y, axis=0, keepdims=True)
    return y * (grad_y - inner)


def _grad_y_frozen(x, y, centroids, cfg):
    g = _sq_dists(x, centroids)
    if cfg.lambda_tv != 0.0:
        g = g + cfg.lambda_tv * np.stack(
            [tv_smooth_grad(y[n], cfg.tv_eps) for n in range(y.shape[0])]
        )
    return g


def ms_loss_grad(x, seg, cfg, mode="frozen-centroids"):
    """Analytic gradient of ms_loss with respect to the logits.

    mode "frozen-centroids" treats the centroids as constants (the
    alternating-scheme gradient); mode "full" adds the chain-rule term
    through the centroid formula as well. Both go through the softmax
    Jacobian.
    """
    x = as_image(x)
    y = seg.memberships
    if y.shape[1:] != x.shape[:2]:
        raise ValueError(f"segmentation {y.shape} does not match image {x.shape}")
    if mode not in ("frozen-centroids", "full"):
        raise ValueError(f"unknown gradient mode {mode!r}")
    c = soft_centroids(x, y)
    grad_y = _grad_y_frozen(x, y, c, cfg)
    if mode == "full":
        # d data / d c_n = -2 sum_r (x - c_n) y_n, nonzero only through the
        # EPS_DEN guard since c_n is the exact weighted mean otherwise.
        sum_y = y.sum(axis=(1, 2))
        resid = np.tensordot(y, x, axes=([1, 2], [0, 1])) - c * sum_y[:, None]  # (N, C)
        coeff = -2.0 * resid / (sum_y + EPS_DEN)[:, None]
        # dc_n/dy_n(r) = (x(r) - c_n) / (sum y_n + EPS_DEN), applied per channel
        diff = x[None, :, :, :] - c[:, None, None, :]
        grad_y = grad_y + np.einsum("nc,nijc->nij", coeff, diff)
    return _chain_softmax(y, grad_y)


def fixed_point_step(x, seg, cfg, centroids=None):
    """One explicit step of the relaxed Euler-Lagrange fixed-point update.

    velocity_n = lambda * div(grad y_n / |grad y_n|)
                 + sum_i (-1)^{delta(n,i)} ||x - c_i||^2

    and y_n <- y_n + step_size * velocity_n. The returned memberships are NOT
    re-projected onto the simplex; callers must renormalize or prefer
    minimize_ms. Centroids default to soft_centroids of the current state but
    may be supplied explicitly.

    Returns (y_new, info) with info holding the per-term fields
    ("curvature_term", "data_term", "velocity").
    """
    x = as_image(x)
    y = seg.memberships
    if y.shape[1:] != x.shape[:2]:
        raise ValueError(f"segmentation {y.shape} does not match image {x.shape}")
    c = soft_centroids(x, y) if centroids is None else np.asarray(centroids, dtype=np.float64)
    sq = _sq_dists(x, c)
    # (-1)^{delta(n,i)}: -1 for the own class, +1 for every competitor
    competition = sq.sum(axis=0, keepdims=True) - 2.0 * sq
    curvature = cfg.lambda_tv * np.stack(
        [curvature_divergence(y[n], cfg.tv_eps) for n in range(y.shape[0])]
    )
    velocity = curvature + competition
    info = {"curvature_term": curvature, "data_term": competition, "velocity": velocity}
    return y + cfg.step_size * velocity, info


def hard_mask(seg):
    """Per-pixel argmax over memberships; ties go to the lowest class index."""
    return np.argmax(seg.memberships, axis=0)


def _kmeans_once(pts, num_classes, rng, iters):
    # k-means++ style seeding followed by Lloyd iterations
    centers = np.empty((num_classes, pts.shape[1]))
    centers[0] = pts[rng.integers(len(pts))]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for k in range(1, num_classes):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(len(pts), p=d2 / total)
        else:
            idx = rng.integers(len(pts))
        centers[k] = pts[idx]
        d2 = np.minimum(d2, np.sum((pts - centers[k]) ** 2, axis=1))
    for _ in range(iters):
        dists = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(dists, axis=1)
        for k in range(num_classes):
            sel = labels == k
            if sel.any():
                centers[k] = pts[sel].mean(axis=0)
    dists = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(dists, axis=1)
    sse = float(dists[np.arange(len(pts)), labels].sum())
    return labels, centers, sse


def kmeans_labels(x, num_classes, seed, iters=20, restarts=8):
    """Lloyd's algorithm on pixel values, best of several seeded restarts.

    Returns (labels, centers) of the restart with the lowest within-cluster
    SSE; deterministic for a fixed seed. Empty clusters keep their previous
    center.
    """
    x = as_image(x)
    pts = x.reshape(-1, x.shape[2])
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        labels, centers, sse = _kmeans_once(pts, num_classes, rng, iters)
        if best is None or sse < best[2]:
            best = (labels, centers, sse)
    return best[0].reshape(x.shape[:2]), best[1]


# Logit magnitude given to the assigned class by the k-means initializer.
KMEANS_LOGIT_GAP = 4.0


def init_logits(x, cfg, init="random"):
    """Initial logit stack: i.i.d. uniform in [-0.1, 0.1], or near-one-hot
    logits from a seeded k-means on the pixel values."""
    x = as_image(x)
    shape = (cfg.num_classes,) + x.shape[:2]
    if init == "random":
        rng = np.random.default_rng(cfg.seed)
        return rng.uniform(-0.1, 0.1, size=shape)
    if init == "kmeans":
        labels, _ = kmeans_labels(x, cfg.num_classes, cfg.seed)
        z = np.zeros(shape)
        for n in range(cfg.num_classes):
            z[n][labels == n] = KMEANS_LOGIT_GAP
        return z
    raise ValueError(f"unknown init {init!r}")


def _descend(state_eval, step0, line_search, loss_now):
    """Backtracking helper: returns (state, terms, exhausted).

    state_eval(eta) evaluates the candidate at step eta against the full
    objective (centroids refreshed); the step is accepted when the loss does
    not increase. Halves the step up to 30 times, then reports exhaustion.
    """
    if not line_search:
        return state_eval(step0) + (False,)
    eta = step0
    for _ in range(31):
        cand, terms = state_eval(eta)
        if terms[0] <= loss_now:
            return cand, terms, False
        eta *= 0.5
    return None, None, True


def minimize_ms(x, cfg, init="random"):
    """Alternating minimization: refresh centroids, gradient-step the logits.

    Stops when the relative loss change drops below rel_tol or max_iters is
    reached. With line_search enabled every accepted step is non-increasing
    in the full objective; exhausted backtracking raises ConvergenceError
    (trace attached). Returns (seg, centroids, trace) with trace rows
    (loss, data_term, tv_term).
    """
    x = as_image(x)
    cfg.validate()
    z = init_logits(x, cfg, init)

    def evaluate(z_new):
        seg = SoftSegmentation.from_logits(z_new)
        c = soft_centroids(x, seg.memberships)
        return (seg, c, z_new), _loss_terms(x, seg.memberships, c, cfg)

    (seg, c, z), terms = evaluate(z)
    trace = [terms]
    for _ in range(cfg.max_iters):
        g = _chain_softmax(seg.memberships, _grad_y_frozen(x, seg.memberships, c, cfg))
        cand, new_terms, exhausted = _descend(
            lambda eta: evaluate(z - eta * g), cfg.step_size, cfg.line_search, terms[0]
        )
        if exhausted:
            raise ConvergenceError(
                "backtracking exhausted without a non-increasing step",
                trace=np.array(trace),
                result=(seg, c),
            )
        prev = terms[0]
        (seg, c, z), terms = cand, new_terms
        trace.append(terms)
        if abs(prev - terms[0]) < cfg.rel_tol * max(abs(prev), 1e-30):
            break
    return seg, c, np.array(trace)
