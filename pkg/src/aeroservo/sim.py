"""Deterministic kinematic simulator closing the pose-servo loop."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose, orthonormalize, pose_compose, pose_distance, pose_inverse, rotvec_exp
from .kinematics import ArmParameters, KinematicState, camera_pose
from .servo import DomainError, PADServo, ServoAction, Status

log = logging.getLogger(__name__)

CSV_HEADER = ("t", "vx", "vy", "vz", "wz", "eta1", "eta2", "eta3", "eta4",
              "theta_err", "ep_norm", "dropped", "solve_failed")


@dataclass(frozen=True)
class NoiseModel:
    pose_rot_sigma: float = 0.0
    pose_trans_sigma: float = 0.0
    keypoint_sigma: float = 0.0
    outlier_fraction: float = 0.0
    drop_probability: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("pose_rot_sigma", "pose_trans_sigma", "keypoint_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("outlier_fraction", "drop_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class SimParams:
    """Episode setup.

    The robot starts at ``initial_joints`` with the vehicle hovering at the
    origin; the object is placed so that its first observed pose is the
    desired pose displaced by ``initial_offset`` (camera frame, metres) and
    ``initial_rotation`` (rotation vector applied on the left).
    """

    dt: float = 0.01
    max_steps: int = 10_000
    seed: int = 0
    tracking: str = "direct"  # or "tracker"
    desired_depth: float = 0.3
    initial_offset: tuple = (0.1, -0.08, 0.2)
    initial_rotation: tuple = (0.11, -0.09, 0.14)
    initial_joints: tuple = (0.0, 0.0, 0.0, 0.0)
    target_velocity: tuple = (0.0, 0.0, 0.0)
    disturbance: tuple = (0.0, 0.0)
    drop_action: str = "zero"  # hover in place; "stale" servos on the last pose; "repeat"
    pose_noise_mode: str = "none"  # "init" or "all"
    pose_noise_times: int = 1
    keypoint_count: int = 512
    feature_dim: int = 64
    feature_sigma: float = 0.01
    stop_on_converge: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.tracking not in ("direct", "tracker"):
            raise ValueError("tracking must be 'direct' or 'tracker'")
        if self.drop_action not in ("zero", "stale", "repeat"):
            raise ValueError("drop_action must be 'zero', 'stale' or 'repeat'")
        if self.pose_noise_mode not in ("none", "init", "all"):
            raise ValueError("pose_noise_mode must be 'none', 'init' or 'all'")
        if self.pose_noise_times < 0:
            raise ValueError("pose_noise_times must be >= 0")
        if not self.desired_depth > 0:
            raise ValueError("desired_depth must be positive")


@dataclass(frozen=True)
class WorldState:
    kin: KinematicState
    object_pose_world: Pose
    disturbance: np.ndarray = field(default_factory=lambda: np.zeros(2))
    time: float = 0.0


@dataclass(frozen=True)
class StepFlags:
    joint_clamped: tuple = ()


@dataclass
class Observation:
    pose: Pose | None
    keypoints_prev: np.ndarray | None
    keypoints_curr: np.ndarray | None
    dropped: bool
    available: bool = True


@dataclass
class EpisodeLog:
    time: list = field(default_factory=list)
    vehicle_cmd: list = field(default_factory=list)
    joint_rates: list = field(default_factory=list)
    theta_err: list = field(default_factory=list)
    ep_norm: list = field(default_factory=list)
    tracked: list = field(default_factory=list)
    truth: list = field(default_factory=list)
    dropped: list = field(default_factory=list)
    solve_failed: list = field(default_factory=list)
    inlier_masks: list = field(default_factory=list)  # (step, mask) per solved frame in tracker mode
    status: str = "NotConverged"
    steps: int = 0

    def record(self, t, action: ServoAction, theta, ep_norm, tracked: Pose, truth: Pose, dropped, failed):
        self.time.append(float(t))
        self.vehicle_cmd.append(np.array(action.vehicle_cmd, dtype=float))
        self.joint_rates.append(np.array(action.joint_rates, dtype=float))
        self.theta_err.append(float(theta))
        self.ep_norm.append(float(ep_norm))
        self.tracked.append(tracked)
        self.truth.append(truth)
        self.dropped.append(bool(dropped))
        self.solve_failed.append(bool(failed))
        self.steps = len(self.time)

    @property
    def converged(self) -> bool:
        return self.status == Status.CONVERGED.value

    def final_tracking_error(self) -> tuple[float, float]:
        return pose_distance(self.tracked[-1], self.truth[-1])

    def rows(self):
        for k in range(self.steps):
            v, e = self.vehicle_cmd[k], self.joint_rates[k]
            yield (self.time[k], *v, *e, self.theta_err[k], self.ep_norm[k],
                   int(self.dropped[k]), int(self.solve_failed[k]))

    def to_csv(self, fh=None) -> str | None:
        """Write the fixed-header table; returns the text when ``fh`` is None."""
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in self.rows():
            w.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
        return buf.getvalue() if fh is None else None


    def inliers_to_csv(self, fh) -> None:
        """One row per solved frame: step, inlier count, mask as a 0/1 string."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("step", "inliers", "mask"))
        for step, mask in self.inlier_masks:
            w.writerow((step, int(mask.sum()), "".join("1" if b else "0" for b in mask)))


def read_episode_csv(fh) -> dict:
    """Columns of an episode table keyed by header name."""
    reader = csv.reader(fh)
    header = next(reader)
    if tuple(header) != CSV_HEADER:
        raise ValueError(f"unexpected episode header: {header}")
    cols = {h: [] for h in header}
    for row in reader:
        for h, val in zip(header, row):
            cols[h].append(float(val))
    return {h: np.asarray(v) for h, v in cols.items()}


def integrate_step(state: WorldState, action: ServoAction, dt: float, params: ArmParameters | None = None,
                   target_velocity=(0.0, 0.0, 0.0)):
    """First-order Euler step. Returns ``(new_state, flags)``.

    Vehicle velocities and rates are body-frame; roll/pitch rates come from
    the disturbance, yaw rate from the command. Joints are clamped to limits.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    params = params or ArmParameters()
    cmd = np.asarray(action.vehicle_cmd, dtype=float)
    vp = state.kin.vehicle_pose
    pos = vp.t + vp.r @ cmd[:3] * dt
    body_rate = np.array([state.disturbance[0], state.disturbance[1], cmd[3]])
    rot = orthonormalize(vp.r @ rotvec_exp(body_rate * dt))

    eta = np.asarray(state.kin.joint_angles) + np.asarray(action.joint_rates, dtype=float) * dt
    clamped = []
    for i, (lo, hi) in enumerate(params.joint_limits):
        if eta[i] < lo or eta[i] > hi:
            eta[i] = min(max(eta[i], lo), hi)
            clamped.append(i)

    obj = state.object_pose_world
    tv = np.asarray(target_velocity, dtype=float)
    if np.any(tv):
        obj = Pose(obj.r, obj.t + tv * dt)
    new = WorldState(KinematicState(Pose(rot, pos), tuple(eta)), obj, state.disturbance, state.time + dt)
    return new, StepFlags(tuple(clamped))


def object_in_camera(state: WorldState, params: ArmParameters) -> Pose:
    cam = camera_pose(params, state.kin, check_limits=False)
    return pose_compose(pose_inverse(cam), state.object_pose_world)


def observe(state: WorldState, noise: NoiseModel, params: ArmParameters, rng: np.random.Generator,
            model_points=None, previous: Pose | None = None) -> Observation:
    """Exact camera-frame object pose plus a noisy keypoint pair.

    ``model_points`` are canonical object keypoints; the pair expresses them in
    the previous (``previous`` pose) and the current camera frame.
    """
    if noise.drop_probability > 0 and rng.random() < noise.drop_probability:
        return Observation(None, None, None, dropped=True)
    pose = object_in_camera(state, params)
    if not pose.t[2] > 0:
        return Observation(None, None, None, dropped=False, available=False)
    kp_prev = kp_curr = None
    if model_points is not None:
        prev = pose if previous is None else previous
        kp_prev = _corrupt(prev.apply(model_points), noise, rng)
        kp_curr = _corrupt(pose.apply(model_points), noise, rng)
    return Observation(pose, kp_prev, kp_curr, dropped=False)


def _corrupt(points, noise: NoiseModel, rng) -> np.ndarray:
    out = points.copy()
    if noise.keypoint_sigma > 0:
        out += rng.normal(0.0, noise.keypoint_sigma, size=out.shape)
    if noise.outlier_fraction > 0:
        m = len(out)
        k = int(round(noise.outlier_fraction * m))
        idx = rng.choice(m, size=k, replace=False)
        lo, hi = points.min(axis=0) - 0.25, points.max(axis=0) + 0.25
        out[idx] = rng.uniform(lo, hi, size=(k, 3))
    return out


def random_unit_vectors(rng, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def perturb_pose(p: Pose, noise: NoiseModel, times: int, rng: np.random.Generator | None = None) -> Pose:
    """Apply ``times`` independent rotation/translation noise draws."""
    if times < 0:
        raise ValueError("times must be >= 0")
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    r, t = p.r, p.t
    for _ in range(times):
        if noise.pose_rot_sigma > 0:
            axis = random_unit_vectors(rng, 1)[0]
            r = rotvec_exp(axis * rng.normal(0.0, noise.pose_rot_sigma)) @ r
        if noise.pose_trans_sigma > 0:
            t = t + rng.normal(0.0, noise.pose_trans_sigma, size=3)
    return Pose(r, t)


def box_surface_points(n: int, rng, half_extents=(0.06, 0.04, 0.03), oversample: int = 8) -> np.ndarray:
    """Blue-noise-like samples on a box surface (farthest-point thinning)."""
    hx = np.asarray(half_extents, dtype=float)
    areas = 4.0 * np.array([hx[1] * hx[2], hx[0] * hx[2], hx[0] * hx[1]])
    m = n * oversample
    axis = rng.choice(3, size=m, p=areas / areas.sum())
    pts = rng.uniform(-hx, hx, size=(m, 3))
    sign = rng.choice([-1.0, 1.0], size=m)
    pts[np.arange(m), axis] = sign * hx[axis]
    chosen = np.empty(n, dtype=int)
    chosen[0] = 0
    dist = np.linalg.norm(pts - pts[0], axis=1)
    for k in range(1, n):
        chosen[k] = int(np.argmax(dist))
        dist = np.minimum(dist, np.linalg.norm(pts - pts[chosen[k]], axis=1))
    return pts[chosen]


def desired_pose(sim: SimParams) -> Pose:
    """Camera straight above the object, object axes aligned with the world."""
    return Pose(np.diag([1.0, -1.0, -1.0]), np.array([0.0, 0.0, sim.desired_depth]))


def initial_world(sim: SimParams, params: ArmParameters) -> tuple[WorldState, Pose]:
    """Initial world state and the desired camera-frame object pose."""
    desired = desired_pose(sim)
    start = Pose(rotvec_exp(sim.initial_rotation) @ desired.r, desired.t + np.asarray(sim.initial_offset))
    kin = KinematicState(Pose.identity(), tuple(sim.initial_joints))
    cam = camera_pose(params, kin, check_limits=False)
    world = WorldState(kin, pose_compose(cam, start), np.asarray(sim.disturbance, dtype=float), 0.0)
    return world, desired


def run_guidance(config) -> EpisodeLog:
    """Run one closed-loop episode from a :class:`~aeroservo.config.RunConfig`."""
    from .tracking import KeypointTracker

    sim: SimParams = config.sim
    params: ArmParameters = config.arm
    noise: NoiseModel = config.noise
    controller: PADServo = config.controller()
    rng = np.random.default_rng(sim.seed)
    noise_rng = np.random.default_rng([sim.seed, noise.seed])

    world, desired = initial_world(sim, params)
    truth = object_in_camera(world, params)
    estimate = truth
    if sim.pose_noise_mode in ("init", "all"):
        estimate = perturb_pose(truth, noise, sim.pose_noise_times, noise_rng)

    tracker = None
    if sim.tracking == "tracker":
        model_points = box_surface_points(sim.keypoint_count, rng)
        tracker = KeypointTracker(model_points, config.matching, config.solver,
                                  feature_dim=sim.feature_dim, feature_sigma=sim.feature_sigma, seed=sim.seed)
        tracker.reset(estimate, truth)
    else:
        model_points = None

    episode = EpisodeLog()
    last_action = ServoAction.zero()
    observed_truth = truth
    for step in range(sim.max_steps):
        obs = observe(world, noise, params, noise_rng, model_points, observed_truth)
        failed = False
        if not obs.available:
            log.warning("object behind camera at t=%.3f", world.time)
            episode.status = "ObservationUnavailable"
            break
        if not obs.dropped:
            truth = obs.pose
            observed_truth = truth
            if tracker is not None:
                estimate, failed = tracker.update(obs.keypoints_prev, obs.keypoints_curr, noise_rng)
                if tracker.last_result is not None and tracker.last_result.inliers is not None:
                    episode.inlier_masks.append((step, tracker.last_result.inliers.copy()))
            else:
                estimate = truth
            if sim.pose_noise_mode == "all" and step > 0:
                # corrupts what the servo sees; the tracker state stays clean
                estimate = perturb_pose(estimate, noise, sim.pose_noise_times, noise_rng)
        else:
            truth = object_in_camera(world, params)

        try:
            result = controller.step(estimate, desired, world.kin, world.disturbance)
        except DomainError as exc:
            log.warning("unusable pose estimate at t=%.3f: %s", world.time, exc)
            episode.status = "EstimateUnusable"
            break
        action = result.action
        if obs.dropped and sim.drop_action == "zero":
            action = ServoAction.zero()
        elif obs.dropped and sim.drop_action == "repeat":
            action = last_action
        episode.record(world.time, action, result.theta, np.linalg.norm(result.epsilon_p),
                       estimate, truth, obs.dropped, failed)

        if result.status is Status.CONVERGED and not obs.dropped:
            episode.status = Status.CONVERGED.value
            if sim.stop_on_converge:
                break
        elif episode.status == Status.CONVERGED.value:
            episode.status = "NotConverged"
        last_action = action
        world, flags = integrate_step(world, action, sim.dt, params, sim.target_velocity)
        if flags.joint_clamped:
            log.debug("joint limits hit at t=%.3f: %s", world.time, flags.joint_clamped)
    log.info("episode finished: %s after %d steps", episode.status, episode.steps)
    return episode


def fit_decay_rate(t, values, floor: float = 0.0) -> float:
    """Slope of a least-squares line through ``log(values)`` (values > floor)."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > floor
    slope, _ = np.polyfit(t[keep], np.log(v[keep]), 1)
    return float(slope)


def with_sim(config, **changes):
    """Copy of ``config`` with ``sim`` fields replaced."""
    return replace(config, sim=replace(config.sim, **changes))
