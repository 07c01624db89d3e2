"""Frame chain and generalized Jacobian of the aerial manipulator.

Frames: world ``W``, vehicle body ``B``, arm base ``L0``, links ``L1..L4``
and the eye-in-hand camera ``C``. Link ``i`` is produced by rotating about
joint axis ``joint_axes[i]`` (expressed in ``L{i-1}``, passing through its
origin) and then translating ``link_lengths[i]`` along ``link_direction``.

Vehicle velocities are body-frame twists. Camera velocities are expressed
in the camera frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, pose_compose, pose_inverse, rotvec_exp, skew

FRAME_IDS = ("B", "L0", "L1", "L2", "L3", "L4", "C")

# column layout of q = (v_x, v_y, v_z, w_x, w_y, w_z, eta_1..eta_4)
VEHICLE_CONTROLLED = (0, 1, 2, 5)
VEHICLE_UNDERACTUATED = (3, 4)
ARM_COLUMNS = (6, 7, 8, 9)


class JointLimitError(ValueError):
    """A joint angle lies outside its configured limits."""

    def __init__(self, joint: int, value: float, limits: tuple[float, float]):
        self.joint = joint
        super().__init__(
            f"joint {joint + 1} (eta{joint + 1}) = {value:.6g} rad outside limits "
            f"[{limits[0]:.6g}, {limits[1]:.6g}]"
        )


def _camera_mount() -> Pose:
    # camera z (optical axis) along the link direction, x kept
    return Pose(np.diag([1.0, -1.0, -1.0]), np.array([0.0, 0.0, -0.02]))


@dataclass(frozen=True)
class ArmParameters:
    link_lengths: tuple = (0.10, 0.10, 0.08, 0.06)
    joint_axes: tuple = ((0.0, 0.0, 1.0), (0.0, 1.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    base_offset: Pose = field(default_factory=lambda: Pose(np.eye(3), np.array([0.0, 0.0, -0.05])))
    camera_offset: Pose = field(default_factory=_camera_mount)
    link_direction: tuple = (0.0, 0.0, -1.0)
    joint_limits: tuple = ((-np.pi, np.pi),) * 4

    def __post_init__(self):
        lengths = tuple(float(x) for x in self.link_lengths)
        if len(lengths) != 4 or min(lengths) <= 0:
            raise ValueError("link_lengths must be 4 positive values")
        axes = tuple(tuple(float(c) for c in a) for a in self.joint_axes)
        if len(axes) != 4 or any(abs(np.linalg.norm(a) - 1.0) > 1e-9 for a in axes):
            raise ValueError("joint_axes must be 4 unit vectors")
        d = np.asarray(self.link_direction, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("link_direction must be a unit vector")
        limits = tuple((float(lo), float(hi)) for lo, hi in self.joint_limits)
        if len(limits) != 4 or any(lo >= hi for lo, hi in limits):
            raise ValueError("joint_limits must be 4 increasing (lo, hi) pairs")
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "joint_axes", axes)
        object.__setattr__(self, "link_direction", tuple(float(c) for c in d))
        object.__setattr__(self, "joint_limits", limits)


@dataclass(frozen=True)
class KinematicState:
    vehicle_pose: Pose = field(default_factory=Pose.identity)
    joint_angles: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        eta = tuple(float(x) for x in np.asarray(self.joint_angles, dtype=float).reshape(4))
        object.__setattr__(self, "joint_angles", eta)


@dataclass(frozen=True)
class GeneralizedVelocity:
    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))
    joint_rates: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([np.ravel(self.linear), np.ravel(self.angular), np.ravel(self.joint_rates)]).astype(float)

    @classmethod
    def from_vector(cls, q) -> "GeneralizedVelocity":
        q = np.asarray(q, dtype=float).reshape(10)
        return cls(q[:3].copy(), q[3:6].copy(), q[6:].copy())


@dataclass(frozen=True)
class SpatialVelocity:
    linear: np.ndarray
    angular: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


def check_joint_limits(params: ArmParameters, joint_angles) -> None:
    for i, (eta, (lo, hi)) in enumerate(zip(joint_angles, params.joint_limits)):
        if not lo <= eta <= hi:
            raise JointLimitError(i, eta, (lo, hi))


def generalized_transform(rel: Pose) -> np.ndarray:
    """6x6 matrix ``[[R, 0], [skew(r) R, R]]`` for the pose of frame a in frame b.

    Its transpose maps a twist ``(v, w)`` of frame b (in b) to the twist of
    a rigidly attached frame a, expressed in a.
    """
    u = np.zeros((6, 6))
    u[:3, :3] = rel.r
    u[3:, :3] = skew(rel.t) @ rel.r
    u[3:, 3:] = rel.r
    return u


def link_transform(params: ArmParameters, i: int, eta: float) -> Pose:
    """Pose of ``L{i+1}`` in ``L{i}``."""
    rot = rotvec_exp(np.asarray(params.joint_axes[i]) * eta)
    return Pose(rot, rot @ (params.link_lengths[i] * np.asarray(params.link_direction)))


def arm_chain(params: ArmParameters, joint_angles) -> dict:
    """Poses of ``L0..L4`` and ``C`` in the vehicle frame ``B``."""
    poses = {"L0": params.base_offset}
    current = params.base_offset
    for i, eta in enumerate(joint_angles):
        current = pose_compose(current, link_transform(params, i, eta))
        poses[f"L{i + 1}"] = current
    poses["C"] = pose_compose(current, params.camera_offset)
    return poses


def forward_kinematics(params: ArmParameters, state: KinematicState, check_limits: bool = True) -> dict:
    """World poses of ``B, L0..L4, C``.

    Raises :class:`JointLimitError` naming the offending joint.
    """
    if check_limits:
        check_joint_limits(params, state.joint_angles)
    out = {"B": state.vehicle_pose}
    for name, pose in arm_chain(params, state.joint_angles).items():
        out[name] = pose_compose(state.vehicle_pose, pose)
    return out


def camera_pose(params: ArmParameters, state: KinematicState, check_limits: bool = True) -> Pose:
    return forward_kinematics(params, state, check_limits)["C"]


def _frame_with_z_along(axis) -> np.ndarray:
    """A rotation whose third column is ``axis``."""
    z = np.asarray(axis, dtype=float)
    z = z / np.linalg.norm(z)
    helper = np.array([1.0, 0.0, 0.0]) if abs(z[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    x = np.cross(helper, z)
    x /= np.linalg.norm(x)
    return np.column_stack([x, np.cross(z, x), z])


def generalized_jacobian(params: ArmParameters, state: KinematicState) -> np.ndarray:
    """6x10 map from ``q`` to the camera twist expressed in the camera frame.

    Vehicle columns are ``(U_C^B)^T``. Joint ``i`` contributes
    ``(U_C^{J_i})^T z`` where ``J_i`` is a frame at the joint whose z axis is
    the joint axis and ``z = e_6``. The result only depends on joint angles.
    """
    chain = arm_chain(params, state.joint_angles)
    cam_in_b = chain["C"]
    jac = np.zeros((6, 10))
    jac[:, :6] = generalized_transform(cam_in_b).T
    e6 = np.zeros(6)
    e6[5] = 1.0
    for i in range(4):
        parent = chain[f"L{i}"]
        joint_frame = Pose(parent.r @ _frame_with_z_along(params.joint_axes[i]), parent.t)
        rel = pose_compose(pose_inverse(joint_frame), cam_in_b)
        jac[:, 6 + i] = generalized_transform(rel).T @ e6
    return jac


def camera_velocity(jac, q) -> SpatialVelocity:
    if isinstance(q, GeneralizedVelocity):
        q = q.as_vector()
    jac = np.asarray(jac, dtype=float)
    q = np.asarray(q, dtype=float).reshape(-1)
    if jac.shape != (6, 10) or q.shape != (10,):
        raise ValueError(f"expected 6x10 Jacobian and 10-vector, got {jac.shape} and {q.shape}")
    v = jac @ q
    return SpatialVelocity(v[:3], v[3:])


def split_jacobians(jac) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(J_mr, J_s, J_bar_s)``: arm columns, controllable vehicle columns
    ``(v_x, v_y, v_z, w_z)`` and the underactuated ``(w_x, w_y)`` columns."""
    jac = np.asarray(jac, dtype=float)
    return jac[:, list(ARM_COLUMNS)], jac[:, list(VEHICLE_CONTROLLED)], jac[:, list(VEHICLE_UNDERACTUATED)]


def merge_jacobians(j_mr, j_s, j_bar_s) -> np.ndarray:
    jac = np.zeros((6, 10))
    jac[:, list(ARM_COLUMNS)] = j_mr
    jac[:, list(VEHICLE_CONTROLLED)] = j_s
    jac[:, list(VEHICLE_UNDERACTUATED)] = j_bar_s
    return jac


def perturb_state(state: KinematicState, index: int, h: float) -> KinematicState:
    """Move generalized coordinate ``index`` by ``h`` (vehicle moves in its body frame)."""
    vp = state.vehicle_pose
    eta = list(state.joint_angles)
    if index < 3:
        step = np.zeros(3)
        step[index] = h
        vp = Pose(vp.r, vp.t + vp.r @ step)
    elif index < 6:
        w = np.zeros(3)
        w[index - 3] = h
        vp = Pose(vp.r @ rotvec_exp(w), vp.t)
    else:
        eta[index - 6] += h
    return KinematicState(vp, tuple(eta))


def finite_difference_jacobian(params: ArmParameters, state: KinematicState, h: float = 1e-6) -> np.ndarray:
    """Central-difference oracle for :func:`generalized_jacobian`.

    Each column is the camera-frame body twist obtained by differencing the
    camera pose along one generalized coordinate.
    """
    from .geometry import vee

    base = camera_pose(params, state, check_limits=False)
    jac = np.zeros((6, 10))
    for k in range(10):
        plus = camera_pose(params, perturb_state(state, k, h), check_limits=False)
        minus = camera_pose(params, perturb_state(state, k, -h), check_limits=False)
        jac[:3, k] = base.r.T @ (plus.t - minus.t) / (2 * h)
        # r_plus - r_minus ~ 2h * base.r @ skew(w)
        jac[3:, k] = vee(base.r.T @ (plus.r - minus.r)) / (2 * h)
    return jac


def jacobian_relative_error(jac, jac_fd) -> float:
    jac = np.asarray(jac)
    return float(np.max(np.abs(jac_fd - jac)) / (1.0 + np.max(np.abs(jac))))


def random_state(rng: np.random.Generator, params: ArmParameters | None = None) -> KinematicState:
    """Vehicle pose within a 2 m cube, any attitude, joints inside their limits."""
    params = params or ArmParameters()
    v = rng.normal(size=3)
    vp = Pose(rotvec_exp(v / np.linalg.norm(v) * rng.uniform(0.0, np.pi)), rng.uniform(-1.0, 1.0, size=3))
    eta = [rng.uniform(lo, hi) for lo, hi in params.joint_limits]
    return KinematicState(vp, tuple(eta))


def verify_jacobian(params: ArmParameters, n_states: int = 100, seed: int = 0, h: float = 1e-6) -> dict:
    """Largest relative error between the analytic and finite-difference Jacobians."""
    rng = np.random.default_rng(seed)
    worst, errors = None, []
    for k in range(n_states):
        state = random_state(rng, params)
        err = jacobian_relative_error(generalized_jacobian(params, state),
                                      finite_difference_jacobian(params, state, h))
        errors.append(err)
        if worst is None or err > errors[worst]:
            worst = k
    return {"states": n_states, "max_error": max(errors), "mean_error": float(np.mean(errors)),
            "worst_index": worst}
