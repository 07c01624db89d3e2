"""Run configuration: a line-oriented ``section.key = value`` file.

Blank lines and ``#`` comments are ignored. Vectors are comma-separated
numbers. Every key is optional; omitted keys keep their defaults.

    servo.lambda_r = 0.25
    sim.initial_offset = 0.1, -0.08, 0.2
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields

import numpy as np

from .geometry import Pose, is_rotation
from .kinematics import ArmParameters
from .matching import MatchingParams
from .neural.weights import NeuralParams
from .posesolve import RobustSolveParams
from .servo import PINV_TOL, THETA_SMALL, PADServo, ServoGains, StopThresholds
from .sim import NoiseModel, SimParams


class ConfigError(ValueError):
    """Bad configuration; the message names the key and line."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(key)
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")
        self.key = key
        self.line = line


@dataclass(frozen=True)
class ServoSettings:
    lambda_r: float = 0.25
    lambda_p: float = 0.27
    delta_r: float = 0.075
    delta_t: float = 0.040
    theta_small: float = THETA_SMALL
    pinv_tolerance: float = PINV_TOL
    guard: str = "both"
    compensate_underactuation: bool = True

    def __post_init__(self):
        ServoGains(self.lambda_r, self.lambda_p)
        StopThresholds(self.delta_r, self.delta_t)
        if not self.theta_small > 0 or not self.pinv_tolerance > 0:
            raise ValueError("theta_small and pinv_tolerance must be positive")
        if self.guard not in ("both", "either"):
            raise ValueError("guard must be 'both' or 'either'")


@dataclass(frozen=True)
class OutputSettings:
    path: str = ""


@dataclass(frozen=True, eq=False)
class RunConfig:
    arm: ArmParameters = field(default_factory=ArmParameters)
    servo: ServoSettings = field(default_factory=ServoSettings)
    noise: NoiseModel = field(default_factory=NoiseModel)
    solver: RobustSolveParams = field(default_factory=RobustSolveParams)
    matching: MatchingParams = field(default_factory=MatchingParams)
    sim: SimParams = field(default_factory=SimParams)
    neural: NeuralParams = field(default_factory=NeuralParams)
    output: OutputSettings = field(default_factory=OutputSettings)

    def controller(self) -> PADServo:
        s = self.servo
        return PADServo(self.arm, ServoGains(s.lambda_r, s.lambda_p), StopThresholds(s.delta_r, s.delta_t),
                        s.theta_small, s.pinv_tolerance, s.guard, s.compensate_underactuation)

    def __eq__(self, other):
        if not isinstance(other, RunConfig):
            return NotImplemented
        return serialize(self) == serialize(other)

    __hash__ = None


# --- flat views ---------------------------------------------------------------
#
# Sections backed by plain dataclasses are flattened field by field. The arm
# section stores poses and nested tuples, so it gets an explicit mapping.

_SECTIONS = {
    "servo": ServoSettings, "noise": NoiseModel, "solver": RobustSolveParams,
    "matching": MatchingParams, "sim": SimParams, "neural": NeuralParams, "output": OutputSettings,
}


def _arm_flat(a: ArmParameters) -> dict:
    return {
        "link_lengths": tuple(a.link_lengths),
        "joint_axes": tuple(np.ravel(a.joint_axes)),
        "base_rotation": tuple(np.ravel(a.base_offset.r)),
        "base_translation": tuple(a.base_offset.t),
        "camera_rotation": tuple(np.ravel(a.camera_offset.r)),
        "camera_translation": tuple(a.camera_offset.t),
        "link_direction": tuple(a.link_direction),
        "joint_limits": tuple(np.ravel(a.joint_limits)),
    }


def _arm_from_flat(v: dict) -> ArmParameters:
    def pose(rot, trans):
        r = np.asarray(rot, dtype=float).reshape(3, 3)
        if not is_rotation(r, 1e-9):
            raise ValueError("mount rotation is not a proper rotation matrix")
        return Pose(r, np.asarray(trans, dtype=float))

    return ArmParameters(
        link_lengths=v["link_lengths"],
        joint_axes=np.asarray(v["joint_axes"]).reshape(4, 3),
        base_offset=pose(v["base_rotation"], v["base_translation"]),
        camera_offset=pose(v["camera_rotation"], v["camera_translation"]),
        link_direction=v["link_direction"],
        joint_limits=np.asarray(v["joint_limits"]).reshape(4, 2),
    )


_ARM_LENGTHS = {"link_lengths": 4, "joint_axes": 12, "base_rotation": 9, "base_translation": 3,
                "camera_rotation": 9, "camera_translation": 3, "link_direction": 3, "joint_limits": 8}


def _flat(section: str, obj) -> dict:
    if section == "arm":
        return _arm_flat(obj)
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def _build(section: str, values: dict):
    if section == "arm":
        return _arm_from_flat(values)
    return _SECTIONS[section](**values)


def _kinds(section: str) -> dict:
    """key -> (type, vector length or None) taken from the defaults."""
    defaults = _flat(section, getattr(RunConfig(), section))
    out = {}
    for key, val in defaults.items():
        if isinstance(val, tuple):
            out[key] = (float, len(val))
        else:
            out[key] = (type(val), None)
    return out


def _parse_value(raw: str, kind, length):
    raw = raw.strip()
    if length is not None:
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if len(parts) != length:
            raise ValueError(f"expected {length} comma-separated numbers, got {len(parts)}")
        return tuple(float(p) for p in parts)
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected true or false, got {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        raw = raw[1:-1]
    return raw


def _format_value(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, tuple):
        return ", ".join(repr(float(x)) for x in val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration text."""
    base = RunConfig()
    kinds = {s: _kinds(s) for s in ("arm", *_SECTIONS)}
    seen: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError("expected 'section.key = value'", line=lineno)
        key, raw = (s.strip() for s in content.split("=", 1))
        section, _, name = key.partition(".")
        if section not in kinds or name not in kinds[section]:
            raise ConfigError("unknown key", key, lineno)
        if key in seen:
            raise ConfigError(f"duplicate key (first set on line {seen[key][1]})", key, lineno)
        kind, length = kinds[section][name]
        try:
            value = _parse_value(raw, kind, length)
        except ValueError as exc:
            raise ConfigError(str(exc), key, lineno) from None
        # per-key check against defaults so the error names this key
        try:
            _build(section, {**_flat(section, getattr(base, section)), name: value})
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), key, lineno) from None
        seen[key] = (value, lineno)

    sections = {}
    for section in kinds:
        values = _flat(section, getattr(base, section))
        mine = {k.split(".", 1)[1]: v for k, v in seen.items() if k.startswith(section + ".")}
        values.update({k: v for k, (v, _) in mine.items()})
        try:
            sections[section] = _build(section, values)
        except (ValueError, TypeError) as exc:
            keys = ", ".join(f"{section}.{k} (line {ln})" for k, (_, ln) in sorted(mine.items()))
            raise ConfigError(f"invalid combination: {exc}", keys or section) from None
    return RunConfig(**sections)


def serialize(config: RunConfig) -> str:
    """Full text form; ``parse_config(serialize(c)) == c``."""
    lines = []
    for section in ("arm", *_SECTIONS):
        for key, val in _flat(section, getattr(config, section)).items():
            lines.append(f"{section}.{key} = {_format_value(val)}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def replace_section(config: RunConfig, section: str, **changes) -> RunConfig:
    return dataclasses.replace(config, **{section: dataclasses.replace(getattr(config, section), **changes)})
