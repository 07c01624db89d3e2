import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aeroservo.matching import (KeypointSet, MatchingParams, MatchSet, dual_softmax, match_features, mnn_filter,
                                project_keypoints, read_keypoints, read_matches, score_matrix,
                                synthetic_recovery, write_keypoints, write_matches)

from conftest import random_rotation


class TestProjectKeypoints:
    def test_row_selector(self, rng):
        pts = rng.normal(size=(10, 3))
        np.testing.assert_array_equal(project_keypoints(np.eye(10)[:4], pts), pts[:4])

    def test_uniform_rows_give_centroid(self, rng):
        pts = rng.normal(size=(8, 3))
        out = project_keypoints(np.full((3, 8), 1 / 8), pts)
        np.testing.assert_allclose(out, np.tile(pts.mean(axis=0), (3, 1)), atol=1e-15)

    def test_affine_equivariance(self, rng):
        m = rng.uniform(size=(5, 20))
        m /= m.sum(axis=1, keepdims=True)
        pts = rng.normal(size=(20, 3))
        r, t = random_rotation(rng), rng.normal(size=3)
        np.testing.assert_allclose(project_keypoints(m, pts @ r.T + t), project_keypoints(m, pts) @ r.T + t,
                                   atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            project_keypoints(np.ones((2, 5)), np.ones((4, 3)))


class TestScoreMatrix:
    def test_orthonormal_identity(self):
        np.testing.assert_array_equal(score_matrix(np.eye(4), np.eye(4), 1.0), np.eye(4))

    def test_temperature_scale(self, rng):
        a, b = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
        np.testing.assert_allclose(score_matrix(a, b, 2.0), score_matrix(a, b, 1.0) / 2)

    def test_hand_case(self):
        s = score_matrix([[1, 0], [0, 1]], [[0.8, 0.6], [0, 1]], 1.0)
        np.testing.assert_allclose(s, [[0.8, 0.0], [0.6, 1.0]])

    def test_argmax_independent_of_tau(self, rng):
        a, b = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
        np.testing.assert_array_equal(score_matrix(a, b, 0.1).argmax(1), score_matrix(a, b, 3.0).argmax(1))

    def test_bad_tau(self):
        with pytest.raises(ValueError):
            score_matrix(np.eye(2), np.eye(2), 0.0)


class TestDualSoftmax:
    def test_single_entry(self):
        np.testing.assert_array_equal(dual_softmax([[3.7]]), [[1.0]])

    def test_constant(self):
        np.testing.assert_allclose(dual_softmax(np.full((2, 2), 5.0)), np.full((2, 2), 0.25))

    def test_hand_case(self):
        p = dual_softmax([[2.0, 0.0], [0.0, 2.0]])
        on = (np.e**2 / (np.e**2 + 1)) ** 2
        off = (1 / (np.e**2 + 1)) ** 2
        np.testing.assert_allclose(p, [[on, off], [off, on]], atol=1e-15)
        assert on == pytest.approx(0.77580, abs=1e-5)
        assert off == pytest.approx(0.01420, abs=1e-5)

    def test_shift_invariance(self, rng):
        s = rng.normal(size=(7, 7))
        np.testing.assert_allclose(dual_softmax(s + 12.3), dual_softmax(s), atol=1e-12)

    def test_bounded_by_factors(self, rng):
        s = rng.normal(size=(6, 6)) * 3
        e = np.exp(s)
        row, col = e / e.sum(1, keepdims=True), e / e.sum(0, keepdims=True)
        p = dual_softmax(s)
        assert np.all(p <= np.minimum(row, col) + 1e-15)
        assert np.all((p > 0) & (p < 1))


class TestMNN:
    def test_diagonal(self):
        assert mnn_filter(np.array([[0.9, 0.1], [0.2, 0.8]]), 0.45).as_set() == {(0, 0), (1, 1)}

    def test_high_threshold(self):
        assert len(mnn_filter(np.array([[0.9, 0.1], [0.2, 0.8]]), 0.95)) == 0

    def test_tie_rule(self):
        assert mnn_filter(np.array([[0.6, 0.6], [0.1, 0.1]]), 0.45).as_set() == {(0, 0)}

    def test_empty(self):
        assert len(mnn_filter(np.zeros((0, 0)))) == 0

    def test_confidences_reported(self):
        m = mnn_filter(np.array([[0.9, 0.1], [0.2, 0.8]]), 0.45)
        np.testing.assert_allclose(m.confidences, [0.9, 0.8])

    @settings(max_examples=300, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.floats(0, 1)),
           st.floats(0, 1))
    def test_one_to_one(self, p, theta):
        m = mnn_filter(p, theta)
        assert len(set(m.pairs[:, 0])) == len(m)
        assert len(set(m.pairs[:, 1])) == len(m)
        assert np.all(m.confidences >= theta)


class TestRecovery:
    def test_planted_permutation(self):
        assert synthetic_recovery(512, 64, 0.01, 0.1, 0.45, seed=0) >= 0.99

    def test_low_dimension_degrades(self):
        # 8-D features are too crowded at this temperature to keep every match
        assert synthetic_recovery(512, 8, 0.01, 0.1, 0.45, seed=0) < 0.99


class TestRecords:
    def test_keypoints_round_trip(self, rng):
        ks = KeypointSet(rng.normal(size=(5, 3)), rng.normal(size=(5, 4)))
        buf = io.StringIO()
        write_keypoints(ks, buf)
        buf.seek(0)
        back = read_keypoints(buf)
        np.testing.assert_array_equal(back.coords, ks.coords)
        np.testing.assert_array_equal(back.features, ks.features)

    def test_matches_round_trip(self, rng):
        ms = match_features(np.eye(6), np.eye(6)[::-1], 0.1, 0.45)
        buf = io.StringIO()
        write_matches(ms, buf)
        buf.seek(0)
        back = read_matches(buf)
        assert back.as_set() == ms.as_set()
        np.testing.assert_array_equal(back.confidences, ms.confidences)

    def test_rejects_wrong_header(self):
        with pytest.raises(ValueError):
            read_matches(io.StringIO("# keypoints n=1 d=1\n"))

    def test_rejects_row_count(self):
        with pytest.raises(ValueError):
            read_keypoints(io.StringIO("# keypoints n=2 d=1\n0 0 0 1\n"))


class TestTypes:
    def test_keypoint_set_validation(self):
        with pytest.raises(ValueError):
            KeypointSet(np.zeros((3, 2)), np.zeros((3, 4)))
        with pytest.raises(ValueError):
            KeypointSet(np.zeros((3, 3)), np.zeros((2, 4)))

    def test_params_validation(self):
        with pytest.raises(ValueError):
            MatchingParams(n=4096, N=2048)
        with pytest.raises(ValueError):
            MatchingParams(theta_c=1.5)

    def test_match_set_lengths(self):
        with pytest.raises(ValueError):
            MatchSet(np.zeros((2, 2), dtype=int), np.zeros(3))
