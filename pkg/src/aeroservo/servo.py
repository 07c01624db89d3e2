"""Decoupled pose servo: rotational (arm) and translational (vehicle) loops."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, rotation_log, skew
from .kinematics import ArmParameters, KinematicState, generalized_jacobian, split_jacobians

THETA_SMALL = 1e-3
PINV_TOL = 1e-10


class Status(enum.Enum):
    RUNNING = "Running"
    CONVERGED = "Converged"


@dataclass(frozen=True)
class ServoGains:
    lambda_r: float = 0.25
    lambda_p: float = 0.27

    def __post_init__(self):
        if not (self.lambda_r > 0 and self.lambda_p > 0):
            raise ValueError("servo gains must be positive")


@dataclass(frozen=True)
class StopThresholds:
    delta_r: float = 0.075
    delta_t: float = 0.040

    def __post_init__(self):
        if not (self.delta_r > 0 and self.delta_t > 0):
            raise ValueError("stop thresholds must be positive")


@dataclass(frozen=True)
class RotationalErrorState:
    epsilon_r: np.ndarray
    theta: float
    u: np.ndarray


@dataclass(frozen=True)
class TranslationalErrorState:
    epsilon_p: np.ndarray


@dataclass(frozen=True)
class ServoAction:
    joint_rates: np.ndarray = field(default_factory=lambda: np.zeros(4))
    vehicle_cmd: np.ndarray = field(default_factory=lambda: np.zeros(4))

    @classmethod
    def zero(cls) -> "ServoAction":
        return cls(np.zeros(4), np.zeros(4))


@dataclass(frozen=True)
class StepResult:
    action: ServoAction
    status: Status
    theta: float
    delta_t_norm: float
    epsilon_p: np.ndarray
    arm_singular: bool = False
    vehicle_singular: bool = False


def pseudo_inverse(m, tolerance: float = PINV_TOL) -> np.ndarray:
    """Moore-Penrose inverse; singular values below ``tolerance * s_max`` are dropped."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return m.T.copy()
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros(m.T.shape)
    keep = s > tolerance * s[0]
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (vt.T * inv) @ u.T


def numerical_rank(m, tolerance: float = PINV_TOL) -> int:
    s = np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tolerance * s[0]))


def rotational_error(r_current, r_desired) -> RotationalErrorState:
    """theta*u of ``r_current^T r_desired``."""
    delta = np.asarray(r_current, dtype=float).T @ np.asarray(r_desired, dtype=float)
    aa = rotation_log(delta)
    return RotationalErrorState(aa.theta * aa.u, aa.theta, aa.u.copy())


def _sinc_ratio(theta: float) -> float:
    # sinc(theta) / sinc(theta/2)^2 == (theta/2) * cot(theta/2)
    if abs(theta) < 1e-4:
        return 1.0 - theta**2 / 12.0 - theta**4 / 720.0
    half = 0.5 * theta
    return half * np.cos(half) / np.sin(half)


def rotation_interaction_matrix(u, theta: float) -> np.ndarray:
    """``L(u, theta) = I - theta/2 [u]x + (1 - sinc(theta)/sinc^2(theta/2)) [u]x^2``."""
    if theta == 0.0:
        return np.eye(3)
    k = skew(u)
    return np.eye(3) - 0.5 * theta * k + (1.0 - _sinc_ratio(theta)) * (k @ k)


def rotational_action(err: RotationalErrorState, j_mr, gains: ServoGains,
                      theta_small: float = THETA_SMALL, tolerance: float = PINV_TOL):
    """Joint rates ``-lambda_r J_mr^+ [0 | M]^+ eps_r``.

    ``M`` is the identity when ``theta < theta_small`` and ``L(u, theta)``
    otherwise. ``err.epsilon_r`` must be expressed in the camera frame.
    Returns ``(eta_dot, singular)``; a fully truncated ``J_mr`` gives zero.
    """
    j_mr = np.asarray(j_mr, dtype=float)
    m = np.eye(3) if err.theta < theta_small else rotation_interaction_matrix(err.u, err.theta)
    selector = np.hstack([np.zeros((3, 3)), m])
    if numerical_rank(j_mr, tolerance) == 0:
        return np.zeros(j_mr.shape[1]), True
    twist = pseudo_inverse(selector, tolerance) @ np.asarray(err.epsilon_r, dtype=float)
    return -gains.lambda_r * (pseudo_inverse(j_mr, tolerance) @ twist), False


class DomainError(ValueError):
    """Input outside the domain of an operation (e.g. non-positive depth)."""


def extended_image_coordinate(t) -> np.ndarray:
    """``(X/Z, Y/Z, log Z)``."""
    x, y, z = np.asarray(t, dtype=float).reshape(3)
    if not z > 0:
        raise DomainError(f"depth Z must be positive, got {z}")
    return np.array([x / z, y / z, np.log(z)])


def translation_interaction_matrix(x: float, y: float, z: float) -> np.ndarray:
    """3x6 ``[L_Z | L(x, y)]`` relating camera twist ``(v, w)`` to d(m_e)/dt."""
    if not z > 0:
        raise DomainError(f"depth Z must be positive, got {z}")
    lz = np.array([[-1.0, 0.0, x], [0.0, -1.0, y], [0.0, 0.0, -1.0]]) / z
    lxy = np.array([
        [x * y, -(1.0 + x * x), y],
        [1.0 + y * y, -x * y, -x],
        [-y, x, 0.0],
    ])
    return np.hstack([lz, lxy])


def translational_action(err: TranslationalErrorState, L, j_s, j_bar_s, nabla, gains: ServoGains,
                         tolerance: float = PINV_TOL):
    """Vehicle command ``-J_s^+ (lambda_p L^+ eps_p + J_bar_s nabla)``.

    Returns ``(upsilon, singular)``; a rank-deficient ``J_s`` gives zero.
    """
    j_s = np.asarray(j_s, dtype=float)
    if numerical_rank(j_s, tolerance) < min(j_s.shape):
        return np.zeros(j_s.shape[1]), True
    wanted = gains.lambda_p * (pseudo_inverse(L, tolerance) @ np.asarray(err.epsilon_p, dtype=float))
    wanted = wanted + np.asarray(j_bar_s, dtype=float) @ np.asarray(nabla, dtype=float).reshape(2)
    return -(pseudo_inverse(j_s, tolerance) @ wanted), False


@dataclass(frozen=True)
class PADServo:
    """Immutable controller bundle; ``step`` is :func:`pad_servo_step`.

    ``guard="both"`` keeps servoing until rotation and translation are both
    under threshold. ``guard="either"`` stops as soon as one of them is.
    """

    params: ArmParameters = field(default_factory=ArmParameters)
    gains: ServoGains = field(default_factory=ServoGains)
    stop: StopThresholds = field(default_factory=StopThresholds)
    theta_small: float = THETA_SMALL
    pinv_tolerance: float = PINV_TOL
    guard: str = "both"
    compensate_underactuation: bool = True

    def __post_init__(self):
        if self.guard not in ("both", "either"):
            raise ValueError(f"guard must be 'both' or 'either', got {self.guard!r}")

    def converged(self, theta: float, dt_norm: float) -> bool:
        rot_ok = theta < self.stop.delta_r
        tra_ok = dt_norm < self.stop.delta_t
        return (rot_ok and tra_ok) if self.guard == "both" else (rot_ok or tra_ok)

    def step(self, current: Pose, desired: Pose, state: KinematicState, nabla=(0.0, 0.0)) -> StepResult:
        return pad_servo_step(current, desired, state, nabla, controller=self)


def pad_servo_step(current: Pose, desired: Pose, state: KinematicState, nabla=(0.0, 0.0),
                   gains: ServoGains | None = None, stop: StopThresholds | None = None,
                   params: ArmParameters | None = None, controller: PADServo | None = None) -> StepResult:
    """One servo decision for the object pose ``current`` seen by the camera."""
    if controller is None:
        controller = PADServo(params or ArmParameters(), gains or ServoGains(), stop or StopThresholds())
    ctl = controller

    rot = rotational_error(current.r, desired.r)
    delta_t = desired.t - current.t
    dt_norm = float(np.linalg.norm(delta_t))
    eps_p = extended_image_coordinate(current.t) - extended_image_coordinate(desired.t)

    if ctl.converged(rot.theta, dt_norm):
        return StepResult(ServoAction.zero(), Status.CONVERGED, rot.theta, dt_norm, eps_p)

    # theta*u of r^T r* lives in the object frame; the arm acts on camera rates
    rot_cam = RotationalErrorState(current.r @ rot.epsilon_r, rot.theta, current.r @ rot.u)

    jac = generalized_jacobian(ctl.params, state)
    j_mr, j_s, j_bar_s = split_jacobians(jac)
    eta_dot, arm_singular = rotational_action(rot_cam, j_mr, ctl.gains, ctl.theta_small, ctl.pinv_tolerance)

    x, y, _ = extended_image_coordinate(current.t)
    L = translation_interaction_matrix(x, y, current.t[2])
    nab = np.asarray(nabla, dtype=float) if ctl.compensate_underactuation else np.zeros(2)
    ups, veh_singular = translational_action(
        TranslationalErrorState(eps_p), L, j_s, j_bar_s, nab, ctl.gains, ctl.pinv_tolerance)

    return StepResult(ServoAction(eta_dot, ups), Status.RUNNING, rot.theta, dt_norm, eps_p,
                      arm_singular, veh_singular)
