import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from aeroservo.estimators import KeypointMatcher, RansacRigidRegistration, RigidRegistration
from aeroservo.posesolve import synthetic_problem


def test_rigid_registration_recovers_motion():
    rng = np.random.default_rng(0)
    corr, truth, _ = synthetic_problem(100, 0.0, 0.0, rng)
    est = RigidRegistration().fit(corr.prev, corr.curr)
    np.testing.assert_allclose(est.predict(corr.prev), corr.curr, atol=1e-12)
    assert est.score(corr.prev, corr.curr) == pytest.approx(1.0)


def test_ransac_registration_with_outliers():
    rng = np.random.default_rng(1)
    corr, truth, outliers = synthetic_problem(300, 0.3, 1e-3, rng)
    est = RansacRigidRegistration(random_state=3).fit(corr.prev, corr.curr)
    ang, dist = est.pose_error(truth)
    assert ang < np.deg2rad(0.1) and dist < 1e-3
    assert np.mean(est.inlier_mask_[~outliers]) > 0.95
    assert est.n_iter_ >= 1


def test_ransac_failure_raises():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(20, 3)), rng.normal(size=(20, 3))
    with pytest.raises(ValueError):
        RansacRigidRegistration(min_inliers=15, inlier_threshold=1e-6).fit(a, b)


def test_params_and_clone():
    est = RansacRigidRegistration(max_iterations=50, inlier_threshold=0.01)
    assert est.get_params()["max_iterations"] == 50
    c = clone(est.set_params(random_state=9))
    assert c.get_params()["random_state"] == 9 and not hasattr(c, "pose_")


def test_validation():
    with pytest.raises(NotFittedError):
        RigidRegistration().predict(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        RigidRegistration().fit(np.zeros((5, 2)), np.zeros((5, 2)))
    with pytest.raises(ValueError):
        RigidRegistration().fit(np.zeros((5, 3)), np.zeros((4, 3)))
    with pytest.raises(ValueError):
        RigidRegistration().fit(np.full((5, 3), np.nan), np.zeros((5, 3)))


def test_keypoint_matcher_recovers_permutation():
    rng = np.random.default_rng(3)
    f = rng.normal(size=(64, 16))
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    perm = rng.permutation(64)
    g = f[perm] + rng.normal(scale=0.01, size=f.shape)
    m = KeypointMatcher().fit(f, g)
    pred = m.predict(f)
    # row i of f appears at position where perm == i
    want = np.argsort(perm)
    assert np.mean(pred == want) > 0.99
    assert np.all(m.confidences_ > 0.45)
    with pytest.raises(ValueError):
        KeypointMatcher().fit(f, g[:, :8])
