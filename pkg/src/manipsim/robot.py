"""Serial-arm robot model: joints, grippers, forward kinematics, actions.

A robot is a fixed-base serial chain of revolute/prismatic joints plus an
optional gripper. Gripper joints articulate fingers but do not move the
chain; the tool point is base o chain o ee_offset where ee_offset already
includes the gripper's own tool offset.

Actions are normalized to [-1, 1] per channel. Channel i scales joint i's
max_step; a magnetic gripper appends one extra channel (> 0 requests attach,
<= 0 requests release). Finger grippers request attach by being closed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import AgentError, ConfigurationError
from .geometry import Pose, UnitQuat, Vec3

# Fraction of the joint range above which a finger joint counts as closed.
CLOSED_FRACTION = 0.8


class JointKind(str, Enum):
    REVOLUTE = "revolute"
    PRISMATIC = "prismatic"


class GripperKind(str, Enum):
    MAGNETIC = "magnetic"
    FINGER = "finger"
    TACTILE = "tactile"


@dataclass(frozen=True)
class JointSpec:
    """One joint: fixed origin transform, motion axis, limits, speed cap."""

    name: str
    kind: JointKind
    axis: Vec3
    origin: Pose
    limits: Tuple[float, float]
    max_step: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", JointKind(self.kind))
        object.__setattr__(self, "axis", self.axis.normalized())
        lo, hi = (float(self.limits[0]), float(self.limits[1]))
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ConfigurationError(f"joint {self.name!r}: limits must satisfy lo < hi, got {self.limits!r}")
        object.__setattr__(self, "limits", (lo, hi))
        if not (math.isfinite(self.max_step) and self.max_step > 0.0):
            raise ConfigurationError(f"joint {self.name!r}: max_step must be positive, got {self.max_step!r}")


@dataclass(frozen=True)
class GripperModel:
    """Gripper attached at the arm flange.

    grasp_radius is the surface distance within which an attach request
    succeeds. tactile_sensor_count adds that many observation channels which
    read 1.0 while an object is attached.
    """

    name: str
    kind: GripperKind
    joints: Tuple[JointSpec, ...] = ()
    grasp_radius: float = 0.05
    tool_offset: Pose = field(default_factory=Pose.identity)
    tactile_sensor_count: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", GripperKind(self.kind))
        object.__setattr__(self, "joints", tuple(self.joints))
        if not (math.isfinite(self.grasp_radius) and self.grasp_radius > 0.0):
            raise ConfigurationError(f"gripper {self.name!r}: grasp_radius must be positive")
        if self.tactile_sensor_count < 0:
            raise ConfigurationError(f"gripper {self.name!r}: tactile_sensor_count must be >= 0")


@dataclass(frozen=True)
class RobotModel:
    """Arm + optional gripper, ready for FK.

    joints are the arm joints only; actuated_joints appends finger joints.
    """

    name: str
    base_pose: Pose
    joints: Tuple[JointSpec, ...]
    ee_offset: Pose
    gripper: Optional[GripperModel] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "joints", tuple(self.joints))
        if len(self.joints) == 0:
            raise ConfigurationError(f"robot {self.name!r} has no joints")

    @property
    def actuated_joints(self) -> Tuple[JointSpec, ...]:
        if self.gripper is None:
            return self.joints
        return self.joints + self.gripper.joints

    @property
    def action_dim(self) -> int:
        n = len(self.actuated_joints)
        if self.gripper is not None and self.gripper.kind is GripperKind.MAGNETIC:
            n += 1
        return n

    @property
    def tactile_sensor_count(self) -> int:
        return self.gripper.tactile_sensor_count if self.gripper else 0

    def joint_limits(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.limits[0] for j in self.actuated_joints], dtype=np.float64)
        hi = np.array([j.limits[1] for j in self.actuated_joints], dtype=np.float64)
        return lo, hi

    def clamp_q(self, q: Sequence[float]) -> np.ndarray:
        lo, hi = self.joint_limits()
        arr = np.asarray(q, dtype=np.float64)
        if arr.shape != lo.shape:
            raise ConfigurationError(
                f"robot {self.name!r} expects {lo.shape[0]} joint values, got {arr.shape}"
            )
        return np.clip(arr, lo, hi)


@dataclass
class RobotState:
    """Joint values plus grasp/tactile status. q covers actuated joints."""

    q: np.ndarray
    attached_object: Optional[str] = None
    tactile: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def copy(self) -> "RobotState":
        return RobotState(self.q.copy(), self.attached_object, self.tactile.copy())


def _joint_motion(joint: JointSpec, value: float) -> Pose:
    if joint.kind is JointKind.REVOLUTE:
        return Pose(Vec3.zero(), UnitQuat.from_axis_angle(joint.axis, value))
    return Pose(joint.axis.scale(value), UnitQuat.identity())


def fk_link_poses(robot: RobotModel, q: Sequence[float]) -> List[Pose]:
    """World pose of each arm link frame (after its joint's motion).

    Gripper joints do not move the chain and are ignored here.
    """
    arr = np.asarray(q, dtype=np.float64)
    n = len(robot.joints)
    if arr.shape[0] < n:
        raise ConfigurationError(f"fk needs at least {n} joint values, got {arr.shape[0]}")
    poses: List[Pose] = []
    current = robot.base_pose
    for joint, value in zip(robot.joints, arr[:n]):
        current = current.compose(joint.origin).compose(_joint_motion(joint, float(value)))
        poses.append(current)
    return poses


def fk_ee(robot: RobotModel, q: Sequence[float]) -> Pose:
    """World pose of the tool point."""
    links = fk_link_poses(robot, q)
    return links[-1].compose(robot.ee_offset)


def apply_action(robot: RobotModel, state: RobotState, action: Sequence[float]) -> RobotState:
    """Advance joints one step; the caller clamps action channels to [-1, 1].

    Returns a new state; attached/tactile fields carry over unchanged.
    """
    arr = np.asarray(action, dtype=np.float64)
    if arr.shape[0] != robot.action_dim:
        raise AgentError(
            f"action for robot {robot.name!r} needs {robot.action_dim} channels, got {arr.shape[0]}"
        )
    joints = robot.actuated_joints
    steps = np.array([j.max_step for j in joints], dtype=np.float64)
    lo, hi = robot.joint_limits()
    new_q = np.clip(state.q + arr[: len(joints)] * steps, lo, hi)
    return RobotState(new_q, state.attached_object, state.tactile.copy())


def gripper_closed(robot: RobotModel, q: np.ndarray) -> bool:
    """True when every finger joint sits in the top CLOSED_FRACTION of range."""
    if robot.gripper is None or not robot.gripper.joints:
        return False
    n_arm = len(robot.joints)
    for i, joint in enumerate(robot.gripper.joints):
        lo, hi = joint.limits
        if q[n_arm + i] < lo + CLOSED_FRACTION * (hi - lo):
            return False
    return True


def attach_desire(robot: RobotModel, state: RobotState, action: Sequence[float]) -> bool:
    """Does this action ask to hold an object?

    Magnetic grippers use the dedicated trailing channel; finger grippers
    request attach while closed; no gripper can never attach.
    """
    if robot.gripper is None:
        return False
    if robot.gripper.kind is GripperKind.MAGNETIC:
        return float(np.asarray(action, dtype=np.float64)[-1]) > 0.0
    return gripper_closed(robot, state.q)
