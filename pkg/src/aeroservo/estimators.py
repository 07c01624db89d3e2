"""scikit-learn style wrappers for the fit/predict-shaped pieces.

``fit(X, y)`` takes previous-frame points ``X`` and current-frame points
``y`` (both (m, 3)); ``predict(X)`` moves points by the fitted motion.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .geometry import pose_distance
from .matching import match_features
from .posesolve import CorrespondenceSet, RobustSolveParams, rigid_align, robust_solve


def _check_points(X, name="X"):
    X = check_array(X, dtype=np.float64, ensure_min_samples=3)
    if X.shape[1] != 3:
        raise ValueError(f"{name} must have 3 columns, got {X.shape[1]}")
    return X


class RigidRegistration(RegressorMixin, BaseEstimator):
    """Least-squares rigid motion (no outlier handling)."""

    def fit(self, X, y, sample_weight=None):
        X, y = _check_points(X), _check_points(y, "y")
        if X.shape != y.shape:
            raise ValueError("X and y must be row-aligned")
        self.pose_ = rigid_align(CorrespondenceSet(X, y, sample_weight))
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        check_is_fitted(self, "pose_")
        return self.pose_.apply(_check_points(X))


class RansacRigidRegistration(RegressorMixin, BaseEstimator):
    """Rigid motion robust to outlying correspondences."""

    def __init__(self, max_iterations=500, inlier_threshold=0.005, min_inliers=12, confidence=0.999,
                 random_state=0):
        self.max_iterations = max_iterations
        self.inlier_threshold = inlier_threshold
        self.min_inliers = min_inliers
        self.confidence = confidence
        self.random_state = random_state

    def fit(self, X, y):
        X, y = _check_points(X), _check_points(y, "y")
        if X.shape != y.shape:
            raise ValueError("X and y must be row-aligned")
        params = RobustSolveParams(self.max_iterations, self.inlier_threshold, self.min_inliers,
                                   int(self.random_state), self.confidence)
        res = robust_solve(CorrespondenceSet(X, y), params)
        if not res.success:
            raise ValueError(f"no model with at least {self.min_inliers} inliers")
        self.pose_ = res.pose
        self.inlier_mask_ = res.inliers
        self.n_iter_ = res.iterations
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        check_is_fitted(self, "pose_")
        return self.pose_.apply(_check_points(X))

    def pose_error(self, pose):
        """``(angle, distance)`` between the fitted motion and ``pose``."""
        check_is_fitted(self, "pose_")
        return pose_distance(self.pose_, pose)


class KeypointMatcher(BaseEstimator):
    """Dual-softmax mutual-nearest-neighbour matching of two feature sets."""

    def __init__(self, tau=0.1, theta_c=0.45):
        self.tau = tau
        self.theta_c = theta_c

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        y = check_array(y, dtype=np.float64)
        if X.shape[1] != y.shape[1]:
            raise ValueError("feature widths differ")
        m = match_features(X, y, self.tau, self.theta_c)
        self.pairs_ = m.pairs
        self.confidences_ = m.confidences
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X=None):
        """Matched current-frame index per previous-frame row, -1 when unmatched."""
        check_is_fitted(self, "pairs_")
        n = len(X) if X is not None else (self.pairs_[:, 0].max() + 1 if len(self.pairs_) else 0)
        out = np.full(n, -1, dtype=int)
        keep = self.pairs_[:, 0] < n
        out[self.pairs_[keep, 0]] = self.pairs_[keep, 1]
        return out
