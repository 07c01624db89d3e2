"""Vision guidance for an aerial manipulator.

Kinematics and a decoupled visual servo (arm handles rotation, vehicle
handles translation), plus a keypoint tracker: feature matching, robust
3D-3D pose solving, and toy-scale versions of the learned blocks.
"""

from .config import RunConfig, parse_config, serialize
from .geometry import AxisAngle, Pose
from .kinematics import ArmParameters, KinematicState, generalized_jacobian
from .servo import PADServo, Status, pad_servo_step
from .sim import run_guidance

__version__ = "0.1.0"

__all__ = ["ArmParameters", "AxisAngle", "KinematicState", "PADServo", "Pose", "RunConfig", "Status",
           "generalized_jacobian", "pad_servo_step", "parse_config", "run_guidance", "serialize"]
