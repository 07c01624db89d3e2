"""Inter-frame pose from matched 3D-3D keypoints, robust to outliers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose, orthonormalize, pose_compose, rotation_log, rotvec_exp


class DegenerateConfigurationError(ValueError):
    """Correspondences do not constrain a rotation (collinear or too few)."""


@dataclass(frozen=True)
class CorrespondenceSet:
    prev: np.ndarray
    curr: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        prev = np.asarray(self.prev, dtype=float).reshape(-1, 3)
        curr = np.asarray(self.curr, dtype=float).reshape(-1, 3)
        if prev.shape != curr.shape:
            raise ValueError("prev and curr must be row-aligned (m, 3) arrays")
        object.__setattr__(self, "prev", prev)
        object.__setattr__(self, "curr", curr)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if len(w) != len(prev) or np.any(w < 0) or np.any(w > 1):
                raise ValueError("weights must be m values in [0, 1]")
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.prev)

    def subset(self, idx) -> "CorrespondenceSet":
        w = None if self.weights is None else self.weights[idx]
        return CorrespondenceSet(self.prev[idx], self.curr[idx], w)


@dataclass(frozen=True)
class RobustSolveParams:
    max_iterations: int = 500
    inlier_threshold: float = 0.005
    min_inliers: int = 12
    rng_seed: int = 0
    confidence: float = 0.999

    def __post_init__(self):
        if self.max_iterations < 1 or self.min_inliers < 1:
            raise ValueError("max_iterations and min_inliers must be positive")
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be positive")
        if not 0 < self.confidence <= 1:
            raise ValueError("confidence must lie in (0, 1]")


@dataclass(frozen=True)
class RobustSolveResult:
    pose: Pose | None
    inliers: np.ndarray
    success: bool
    iterations: int
    best_sample_inliers: int

    @property
    def n_inliers(self) -> int:
        return int(self.inliers.sum())


def estimate_translation(c: CorrespondenceSet) -> np.ndarray:
    """Mean keypoint displacement ``mean(curr - prev)``."""
    if len(c) == 0:
        raise ValueError("empty correspondence set")
    return np.mean(c.curr - c.prev, axis=0)


def rigid_align(c: CorrespondenceSet) -> Pose:
    """Weighted least-squares rotation and translation taking prev onto curr.

    Cross-covariance SVD with a determinant correction so the result is a
    proper rotation even for reflected inputs.
    """
    if len(c) < 3:
        raise DegenerateConfigurationError(f"need at least 3 correspondences, got {len(c)}")
    w = np.ones(len(c)) if c.weights is None else c.weights
    if w.sum() <= 0:
        raise DegenerateConfigurationError("all weights are zero")
    w = w / w.sum()
    mu_p = w @ c.prev
    mu_c = w @ c.curr
    h = (c.prev - mu_p).T @ ((c.curr - mu_c) * w[:, None])
    u, s, vt = np.linalg.svd(h)
    if s[0] <= 0 or s[1] <= 1e-12 * s[0]:
        raise DegenerateConfigurationError("cross-covariance has rank < 2 (collinear points)")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return Pose(r, mu_c - r @ mu_p)


def residuals(pose: Pose, c: CorrespondenceSet) -> np.ndarray:
    return np.linalg.norm(c.prev @ pose.r.T + pose.t - c.curr, axis=1)


def _batch_align(prev, curr):
    """Unweighted Kabsch for a batch of (b, k, 3) samples; returns (R, t, ok)."""
    mu_p = prev.mean(axis=1, keepdims=True)
    mu_c = curr.mean(axis=1, keepdims=True)
    h = np.einsum("bki,bkj->bij", prev - mu_p, curr - mu_c)
    u, s, vt = np.linalg.svd(h)
    ok = (s[:, 0] > 0) & (s[:, 1] > 1e-9 * s[:, 0])
    v = np.transpose(vt, (0, 2, 1))
    d = np.sign(np.linalg.det(v @ np.transpose(u, (0, 2, 1))))
    fix = np.ones((len(d), 3))
    fix[:, 2] = d
    r = (v * fix[:, None, :]) @ np.transpose(u, (0, 2, 1))
    t = mu_c[:, 0] - np.einsum("bij,bj->bi", r, mu_p[:, 0])
    return r, t, ok


def _triplets(rng, m: int, count: int) -> np.ndarray:
    """``count`` uniformly drawn triples of distinct indices below ``m``."""
    a = rng.integers(0, m, size=count)
    b = rng.integers(0, m - 1, size=count)
    c = rng.integers(0, m - 2, size=count)
    b = b + (b >= a)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    c = c + (c >= lo)
    c = c + (c >= hi)
    return np.column_stack([a, b, c])


def robust_solve(c: CorrespondenceSet, params: RobustSolveParams | None = None,
                 batch: int = 64) -> RobustSolveResult:
    """RANSAC over 3-point samples followed by a refit on the consensus set.

    Deterministic for a given ``params.rng_seed``. Sampling stops early once
    the consensus is large enough for ``params.confidence``. The returned
    model never has fewer inliers than the best minimal-sample model.
    """
    params = params or RobustSolveParams()
    m = len(c)
    empty = np.zeros(m, dtype=bool)
    if m < max(3, params.min_inliers):
        return RobustSolveResult(None, empty, False, 0, 0)

    rng = np.random.default_rng(params.rng_seed)
    samples = _triplets(rng, m, params.max_iterations)
    thr = params.inlier_threshold

    best_count, best_mask, best_model = -1, empty, None
    needed = params.max_iterations
    done = 0
    while done < min(needed, params.max_iterations):
        idx = samples[done:done + batch]
        r, t, ok = _batch_align(c.prev[idx], c.curr[idx])
        pred = np.matmul(c.prev[None], np.transpose(r, (0, 2, 1))) + t[:, None, :]
        inl = np.linalg.norm(pred - c.curr[None], axis=2) < thr
        inl &= ok[:, None]
        counts = inl.sum(axis=1)
        k = int(np.argmax(counts))
        if counts[k] > best_count:
            best_count, best_mask, best_model = int(counts[k]), inl[k], Pose(r[k], t[k])
            frac = best_count / m
            if frac >= 1.0:
                needed = 0
            elif frac > 0:
                needed = int(np.ceil(np.log(1 - params.confidence) / np.log(1 - frac**3)))
        done += len(idx)

    if best_count < params.min_inliers:
        return RobustSolveResult(None, empty, False, done, max(best_count, 0))

    pose, mask = _refit(c, best_mask, thr)
    if mask.sum() < best_count:
        # the least-squares fit lost inliers: upweight the lost ones, then as a last
        # resort move towards the sample model (which keeps the count by construction)
        pose, mask = _reweighted_refit(c, best_mask, thr)
    if mask.sum() < best_count:
        pose, mask = _nearest_consensus(c, pose, best_model, best_count, thr)
    return RobustSolveResult(pose, mask, True, done, best_count)


def _nearest_consensus(c: CorrespondenceSet, start: Pose, goal: Pose, count: int, thr: float,
                       steps: int = 32):
    step = rotation_log(start.r.T @ goal.r).rotvec
    for alpha in np.linspace(0.0, 1.0, steps + 1)[1:]:
        cand = goal if alpha == 1.0 else Pose(start.r @ rotvec_exp(alpha * step),
                                              (1 - alpha) * start.t + alpha * goal.t)
        mask = residuals(cand, c) < thr
        if mask.sum() >= count:
            return cand, mask
    return goal, residuals(goal, c) < thr


def _reweighted_refit(c: CorrespondenceSet, keep, thr: float, rounds: int = 40):
    """Weighted fits on ``keep`` that double the weight of members pushed over ``thr``."""
    sub = c.subset(keep)
    base = np.ones(len(sub)) if sub.weights is None else sub.weights
    boost = np.ones(len(sub))
    pose = rigid_align(sub)
    for _ in range(rounds):
        lost = residuals(pose, sub) >= thr
        if not lost.any():
            break
        boost[lost] *= 2.0
        w = base * boost
        pose = rigid_align(CorrespondenceSet(sub.prev, sub.curr, w / w.max()))
    return pose, residuals(pose, c) < thr


def _refit(c: CorrespondenceSet, mask, thr, rounds: int = 3):
    pose = rigid_align(c.subset(mask))
    for _ in range(rounds):
        new_mask = residuals(pose, c) < thr
        if np.array_equal(new_mask, mask) or new_mask.sum() < 3:
            break
        mask = new_mask
        pose = rigid_align(c.subset(mask))
    return pose, residuals(pose, c) < thr


def accumulate_pose(delta: Pose, previous: Pose) -> Pose:
    """``delta @ previous`` with the rotation kept on SO(3)."""
    p = pose_compose(delta, previous)
    return Pose(orthonormalize(p.r), p.t)


def synthetic_problem(m: int, outlier_fraction: float, sigma: float, rng: np.random.Generator,
                      half_extent: float = 0.15):
    """Random correspondences with a planted motion.

    Points fill a cube of half-width ``half_extent`` half a metre in front of
    the camera; inliers move
    by a random pose (up to 0.5 rad, 0.1 m) plus Gaussian noise, outliers land
    uniformly in a 1 m cube. Returns ``(correspondences, true_pose, outlier_mask)``.
    """
    prev = rng.uniform(-half_extent, half_extent, size=(m, 3)) + np.array([0.0, 0.0, 0.5])
    axis = rng.normal(size=3)
    r = rotvec_exp(axis / np.linalg.norm(axis) * rng.uniform(0.0, 0.5))
    t = rng.uniform(-0.1, 0.1, size=3)
    curr = prev @ r.T + t + rng.normal(0.0, sigma, size=(m, 3))
    bad = np.zeros(m, dtype=bool)
    bad[rng.choice(m, size=int(round(outlier_fraction * m)), replace=False)] = True
    curr[bad] = rng.uniform(-0.5, 0.5, size=(int(bad.sum()), 3)) + np.array([0.0, 0.0, 0.5])
    return CorrespondenceSet(prev, curr), Pose(r, t), bad
