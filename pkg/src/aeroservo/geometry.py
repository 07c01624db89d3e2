"""SO(3)/SE(3) primitives shared by every other module.

Rotations are plain 3x3 ``numpy`` arrays wrapped in small immutable value
types. All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Below this angle the log map uses the first-order series for the axis.
_SMALL_ANGLE = 1e-7
# Above this angle the axis is recovered from the symmetric part of R.
_NEAR_PI_COS = -0.5
# Orthogonality defect that triggers re-projection onto SO(3).
ORTHO_DEFECT_TOL = 1e-8


def _frozen(a, shape):
    arr = np.array(a, dtype=float, copy=True).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AxisAngle:
    """Unit rotation axis ``u`` and angle ``theta`` in [0, pi]."""

    u: np.ndarray
    theta: float

    def __post_init__(self):
        u = _frozen(self.u, (3,))
        n = np.linalg.norm(u)
        if not np.isfinite(n) or abs(n - 1.0) > 1e-9:
            raise ValueError(f"axis must be a unit vector, got norm {n}")
        if not 0.0 <= self.theta <= np.pi + 1e-12:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "theta", float(self.theta))

    @classmethod
    def from_rotvec(cls, v) -> "AxisAngle":
        v = np.asarray(v, dtype=float).reshape(3)
        theta = float(np.linalg.norm(v))
        if theta == 0.0:
            return cls(np.array([1.0, 0.0, 0.0]), 0.0)
        u = v / theta
        theta = theta % (2.0 * np.pi)
        if theta > np.pi:
            # wrap into [0, pi] by flipping the axis
            u, theta = -u, 2.0 * np.pi - theta
        return cls(u, theta)

    @property
    def rotvec(self) -> np.ndarray:
        return self.theta * self.u


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``x -> r @ x + t``."""

    r: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = _frozen(self.r, (3, 3))
        t = _frozen(self.t, (3,))
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("pose entries must be finite")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.r
        m[:3, 3] = self.t
        return m

    def apply(self, points) -> np.ndarray:
        """Transform a single point or an ``(m, 3)`` array of points."""
        p = np.asarray(points, dtype=float)
        return p @ self.r.T + self.t

    def __matmul__(self, other: "Pose") -> "Pose":
        return pose_compose(self, other)


def is_rotation(m, tol: float = 1e-9) -> bool:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        return False
    return bool(np.allclose(m.T @ m, np.eye(3), atol=tol) and abs(np.linalg.det(m) - 1.0) < tol)


def skew(v) -> np.ndarray:
    """Antisymmetric matrix with ``skew(v) @ w == cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m) -> np.ndarray:
    """Inverse of :func:`skew` applied to the antisymmetric part of ``m``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def rotation_exp(a: AxisAngle) -> np.ndarray:
    """Rodrigues formula."""
    k = skew(a.u)
    s, c = np.sin(a.theta), np.cos(a.theta)
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def rotvec_exp(v) -> np.ndarray:
    """Rotation matrix for a rotation vector of any length."""
    v = np.asarray(v, dtype=float).reshape(3)
    theta = np.linalg.norm(v)
    k = skew(v)
    if theta < 1e-8:
        return np.eye(3) + k + 0.5 * (k @ k)
    return np.eye(3) + (np.sin(theta) / theta) * k + ((1.0 - np.cos(theta)) / theta**2) * (k @ k)


def rotation_log(r) -> AxisAngle:
    """Axis-angle of a rotation matrix.

    Stable at both ends of the angle range: the axis comes from the first
    order series near zero and from the largest-diagonal pivot of the
    symmetric part near pi.
    """
    r = np.asarray(r, dtype=float)
    w = vee(r)  # sin(theta) * u
    s = np.linalg.norm(w)
    c = 0.5 * (np.trace(r) - 1.0)
    theta = float(np.arctan2(s, c))

    if theta < _SMALL_ANGLE:
        if s == 0.0:
            return AxisAngle(np.array([1.0, 0.0, 0.0]), 0.0)
        return AxisAngle(w / s, theta)

    if c < _NEAR_PI_COS:
        sym = 0.5 * (r + r.T) - c * np.eye(3)  # (1 - cos) u u^T
        k = int(np.argmax(np.diag(sym)))
        u = sym[:, k] / np.sqrt(sym[k, k])
        if w @ u < 0.0:
            u = -u
        elif s < 1e-15 and u[np.argmax(np.abs(u))] < 0.0:
            # exactly pi: axis sign is arbitrary, pick the largest component positive
            u = -u
        return AxisAngle(u / np.linalg.norm(u), theta)

    return AxisAngle(w / s, theta)


def rotation_angle(r) -> float:
    """Geodesic angle of ``r`` from the identity."""
    r = np.asarray(r, dtype=float)
    return float(np.arctan2(np.linalg.norm(vee(r)), 0.5 * (np.trace(r) - 1.0)))


def nearest_rotation(m) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) (polar decomposition)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def orthonormalize(r, tol: float = ORTHO_DEFECT_TOL) -> np.ndarray:
    """Re-project ``r`` onto SO(3) only when its defect exceeds ``tol``."""
    r = np.asarray(r, dtype=float)
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
        return nearest_rotation(r)
    return r


def pose_compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.r @ b.r, a.r @ b.t + a.t)


def pose_inverse(p: Pose) -> Pose:
    rt = p.r.T
    return Pose(rt, -rt @ p.t)


def pose_distance(a: Pose, b: Pose) -> tuple[float, float]:
    """Rotation angle (rad) and translation distance between two poses."""
    return rotation_angle(a.r.T @ b.r), float(np.linalg.norm(a.t - b.t))
