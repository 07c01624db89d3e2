import numpy as np
import pytest

from aeroservo.geometry import Pose, pose_compose, pose_inverse, rotvec_exp, skew
from aeroservo.kinematics import (ArmParameters, GeneralizedVelocity, JointLimitError, KinematicState,
                                  camera_pose, camera_velocity, finite_difference_jacobian, forward_kinematics,
                                  generalized_jacobian, generalized_transform, jacobian_relative_error,
                                  merge_jacobians, random_state, split_jacobians, verify_jacobian)

from conftest import random_rotation

PARAMS = ArmParameters()


def random_pose(rng):
    return Pose(random_rotation(rng), rng.normal(size=3))


class TestArmParameters:
    def test_rejects_bad_lengths(self):
        with pytest.raises(ValueError):
            ArmParameters(link_lengths=(0.1, 0.1, 0.0, 0.1))

    def test_rejects_non_unit_axis(self):
        with pytest.raises(ValueError):
            ArmParameters(joint_axes=((0, 0, 2.0), (0, 1, 0), (1, 0, 0), (0, 1, 0)))


class TestGeneralizedTransform:
    def test_identity(self):
        np.testing.assert_array_equal(generalized_transform(Pose.identity()), np.eye(6))

    def test_pure_rotation_is_block_diagonal(self, rng):
        r = random_rotation(rng)
        u = generalized_transform(Pose(r, np.zeros(3)))
        np.testing.assert_array_equal(u[:3, :3], r)
        np.testing.assert_array_equal(u[3:, 3:], r)
        np.testing.assert_array_equal(u[:3, 3:], 0)
        np.testing.assert_array_equal(u[3:, :3], 0)

    def test_translation_block(self):
        u = generalized_transform(Pose(np.eye(3), np.array([0.0, 0.0, 1.0])))
        np.testing.assert_array_equal(u[3:, :3], skew([0, 0, 1]))

    def test_inverse(self, rng):
        for _ in range(50):
            p = random_pose(rng)
            np.testing.assert_allclose(np.linalg.inv(generalized_transform(p)),
                                       generalized_transform(pose_inverse(p)), atol=1e-12)

    def test_homomorphism(self, rng):
        for _ in range(100):
            a, b = random_pose(rng), random_pose(rng)
            np.testing.assert_allclose(generalized_transform(pose_compose(a, b)),
                                       generalized_transform(a) @ generalized_transform(b), atol=1e-12)


class TestForwardKinematics:
    def test_zero_configuration_closed_form(self):
        stretched = Pose(np.eye(3), np.array([0.0, 0.0, -sum(PARAMS.link_lengths)]))
        expected = pose_compose(pose_compose(PARAMS.base_offset, stretched), PARAMS.camera_offset)
        got = camera_pose(PARAMS, KinematicState())
        np.testing.assert_allclose(got.r, expected.r, atol=1e-15)
        np.testing.assert_allclose(got.t, expected.t, atol=1e-15)
        np.testing.assert_allclose(got.t, [0.0, 0.0, -0.41], atol=1e-15)

    @pytest.mark.parametrize("joint", range(4))
    def test_single_joint_is_rigid_rotation_about_its_axis(self, joint):
        delta = 0.37
        zero = forward_kinematics(PARAMS, KinematicState())
        eta = [0.0] * 4
        eta[joint] = delta
        moved = camera_pose(PARAMS, KinematicState(joint_angles=eta))
        pivot = zero[f"L{joint}"]
        spin = Pose(rotvec_exp(np.asarray(PARAMS.joint_axes[joint]) * delta), np.zeros(3))
        expected = pivot @ spin @ pose_inverse(pivot) @ zero["C"]
        np.testing.assert_allclose(moved.r, expected.r, atol=1e-12)
        np.testing.assert_allclose(moved.t, expected.t, atol=1e-12)

    def test_vehicle_translation_shifts_camera(self, rng):
        eta = tuple(rng.uniform(-1, 1, size=4))
        t = rng.normal(size=3)
        a = camera_pose(PARAMS, KinematicState(Pose.identity(), eta))
        b = camera_pose(PARAMS, KinematicState(Pose(np.eye(3), t), eta))
        np.testing.assert_allclose(b.t - a.t, t, atol=1e-14)
        np.testing.assert_array_equal(a.r, b.r)

    def test_all_frames_present(self):
        assert set(forward_kinematics(PARAMS, KinematicState())) == {"B", "L0", "L1", "L2", "L3", "L4", "C"}

    def test_joint_limit_names_joint(self):
        with pytest.raises(JointLimitError, match="joint 3"):
            forward_kinematics(PARAMS, KinematicState(joint_angles=(0.0, 0.0, 4.0, 0.0)))


class TestJacobian:
    def test_zero_q(self, rng):
        jac = generalized_jacobian(PARAMS, random_state(rng))
        v = camera_velocity(jac, np.zeros(10))
        np.testing.assert_array_equal(v.linear, 0)
        np.testing.assert_array_equal(v.angular, 0)

    def test_vehicle_lift_at_zero_configuration(self):
        jac = generalized_jacobian(PARAMS, KinematicState())
        q = GeneralizedVelocity(np.array([0.0, 0.0, 1.0]))
        r_cb = camera_pose(PARAMS, KinematicState()).r
        np.testing.assert_allclose(camera_velocity(jac, q).linear, r_cb.T @ [0.0, 0.0, 1.0], atol=1e-15)

    def test_matches_finite_differences(self, rng):
        for _ in range(100):
            state = random_state(rng)
            err = jacobian_relative_error(generalized_jacobian(PARAMS, state),
                                          finite_difference_jacobian(PARAMS, state))
            assert err < 1e-5

    def test_non_default_geometry(self, rng):
        params = ArmParameters(joint_axes=((0, 1, 0),) * 4, link_lengths=(0.2, 0.15, 0.1, 0.05))
        assert verify_jacobian(params, 20, seed=3)["max_error"] < 1e-5

    def test_independent_of_vehicle_pose(self, rng):
        eta = tuple(rng.uniform(-2, 2, size=4))
        a = generalized_jacobian(PARAMS, KinematicState(Pose.identity(), eta))
        b = generalized_jacobian(PARAMS, KinematicState(random_pose(rng), eta))
        np.testing.assert_array_equal(a, b)

    def test_camera_velocity_identity_wiring(self):
        jac = np.hstack([np.eye(6), np.zeros((6, 4))])
        v = camera_velocity(jac, np.eye(10)[0])
        np.testing.assert_array_equal(v.linear, [1, 0, 0])

    def test_camera_velocity_linear(self, rng):
        jac = generalized_jacobian(PARAMS, random_state(rng))
        q1, q2 = rng.normal(size=10), rng.normal(size=10)
        lhs = camera_velocity(jac, q1 + q2).as_vector()
        rhs = camera_velocity(jac, q1).as_vector() + camera_velocity(jac, q2).as_vector()
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_camera_velocity_shape_check(self):
        with pytest.raises(ValueError):
            camera_velocity(np.zeros((6, 9)), np.zeros(9))


class TestSplit:
    def test_reassembly(self, rng):
        jac = generalized_jacobian(PARAMS, random_state(rng))
        np.testing.assert_array_equal(merge_jacobians(*split_jacobians(jac)), jac)

    def test_underactuated_columns(self):
        jac = generalized_jacobian(PARAMS, KinematicState())
        _, j_s, j_bar = split_jacobians(jac)
        np.testing.assert_array_equal(j_bar, jac[:, 3:5])
        np.testing.assert_array_equal(j_s, jac[:, [0, 1, 2, 5]])

    def test_arm_part_consistent(self, rng):
        jac = generalized_jacobian(PARAMS, random_state(rng))
        j_mr, _, _ = split_jacobians(jac)
        eta_dot = rng.normal(size=4)
        q = GeneralizedVelocity(joint_rates=eta_dot)
        np.testing.assert_allclose(j_mr @ eta_dot, camera_velocity(jac, q).as_vector(), atol=1e-15)

    def test_default_arm_has_full_angular_authority(self, rng):
        for _ in range(20):
            j_mr, _, _ = split_jacobians(generalized_jacobian(PARAMS, random_state(rng)))
            assert np.linalg.matrix_rank(j_mr[3:]) == 3
