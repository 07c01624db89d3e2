"""Frame-to-frame keypoint tracker: match, solve the pose change, accumulate."""

from __future__ import annotations

import numpy as np

from .geometry import Pose
from .matching import MatchingParams, match_features
from .posesolve import CorrespondenceSet, RobustSolveParams, accumulate_pose, robust_solve


class KeypointTracker:
    """Tracks an object pose from keypoint pairs of consecutive frames.

    Every canonical keypoint carries a fixed random unit feature; each frame
    sees those features with additive noise and in shuffled slot order, so
    correspondences have to be recovered by matching.
    """

    def __init__(self, model_points, matching: MatchingParams | None = None,
                 solver: RobustSolveParams | None = None, feature_dim: int = 64,
                 feature_sigma: float = 0.01, seed: int = 0):
        self.model_points = np.asarray(model_points, dtype=float)
        self.matching = matching or MatchingParams()
        self.solver = solver or RobustSolveParams()
        self.feature_sigma = feature_sigma
        rng = np.random.default_rng([seed, 7])
        f = rng.normal(size=(len(self.model_points), feature_dim))
        self.features = f / np.linalg.norm(f, axis=1, keepdims=True)
        self.pose = Pose.identity()
        self.frames = 0
        self.failures = 0
        self.last_matches = None
        self.last_result = None

    def reset(self, estimate: Pose, truth: Pose | None = None):
        self.pose = estimate
        self.frames = 0
        self.failures = 0

    def _view(self, rng):
        f = self.features
        if self.feature_sigma > 0:
            f = f + rng.normal(0.0, self.feature_sigma, size=f.shape)
        return f

    def update(self, kp_prev, kp_curr, rng: np.random.Generator) -> tuple[Pose, bool]:
        """Consume one keypoint pair; returns ``(pose, solve_failed)``.

        On failure the previous pose is held.
        """
        n = len(kp_curr)
        perm = rng.permutation(n)
        f_prev, f_curr = self._view(rng), self._view(rng)[perm]
        matches = match_features(f_prev, f_curr, self.matching.tau, self.matching.theta_c)
        self.last_matches = matches
        self.frames += 1
        i, j = matches.pairs[:, 0], matches.pairs[:, 1]
        corr = CorrespondenceSet(np.asarray(kp_prev)[i], np.asarray(kp_curr)[perm][j])
        result = robust_solve(corr, self.solver)
        self.last_result = result
        if not result.success:
            self.failures += 1
            return self.pose, True
        self.pose = accumulate_pose(result.pose, self.pose)
        return self.pose, False


def track_trajectory(poses, model_points, tracker: KeypointTracker | None = None,
                     rng: np.random.Generator | None = None, **kwargs) -> list:
    """Track a sequence of camera-frame object poses from exact keypoints.

    The tracker is initialised with ``poses[0]``; returns the estimates.
    """
    rng = rng or np.random.default_rng(0)
    tracker = tracker or KeypointTracker(model_points, **kwargs)
    tracker.reset(poses[0])
    out = [poses[0]]
    for prev, curr in zip(poses[:-1], poses[1:]):
        pose, _ = tracker.update(prev.apply(model_points), curr.apply(model_points), rng)
        out.append(pose)
    return out
