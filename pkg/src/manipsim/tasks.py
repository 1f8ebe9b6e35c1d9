"""Task definitions, distances, rewards, success and termination rules.

A task names a target entity ("ee" or an object id) and usually a goal (an
entity id or a literal point). Distance is computed under the configured
metric, either between ground-truth positions or between encoder codes of
the current frame and a goal snapshot taken at reset.

Success semantics:

* reach           tool point within threshold of the goal
* push            target resting within threshold, not held
* pick            target held and lifted lift_height above its spawn height
* pick_and_place  target was held, now released, resting within threshold
* throw           like pick_and_place, but the release must have happened
                  farther than the threshold from the goal (it flew there)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Protocol, Tuple, Union

import numpy as np

from .errors import ConfigurationError
from .geometry import DistanceMetric, Vec3, compute_distance
from .scene import ObjectRole, Scene, get_entity_position


class TaskType(str, Enum):
    REACH = "reach"
    PUSH = "push"
    PICK = "pick"
    PICK_AND_PLACE = "pick_and_place"
    THROW = "throw"


class TerminationReason(str, Enum):
    SUCCESS = "success"
    TIMEOUT = "timeout"
    OUT_OF_BOUNDS = "out_of_bounds"


@dataclass(frozen=True)
class TaskSpec:
    """What counts as done. goal may be an entity id or a literal point."""

    type: TaskType
    target: str
    goal: Optional[Union[str, Vec3]] = None
    success_threshold: float = 0.05
    lift_height: float = 0.1

    def __post_init__(self) -> None:
        object.__setattr__(self, "type", TaskType(self.type))
        if not (math.isfinite(self.success_threshold) and self.success_threshold > 0.0):
            raise ConfigurationError(
                f"success_threshold must be positive, got {self.success_threshold!r}"
            )
        if not (math.isfinite(self.lift_height) and self.lift_height > 0.0):
            raise ConfigurationError(f"lift_height must be positive, got {self.lift_height!r}")
        if self.type is TaskType.REACH and self.target != "ee":
            raise ConfigurationError('reach tasks target the tool point: set target to "ee"')
        if self.type is not TaskType.REACH and self.target == "ee":
            raise ConfigurationError(f"{self.type.value} tasks must target an object, not the tool")
        if self.goal is None and self.type is not TaskType.PICK:
            raise ConfigurationError(f"{self.type.value} tasks require a goal")


class RewardSource(str, Enum):
    GROUND_TRUTH = "ground_truth"
    ENCODER = "encoder"


class RewardShaping(str, Enum):
    DENSE_NEGATIVE = "dense_negative"
    DENSE_DELTA = "dense_delta"
    SPARSE = "sparse"
    COMPOSITE = "composite"


@dataclass(frozen=True)
class RewardSpec:
    """How raw distance becomes reward.

    dense_negative pays -distance every step; dense_delta pays the
    per-step decrease in distance (0 on the first step); sparse pays 1 on
    success steps and 0 otherwise; composite pays dense_delta plus
    success_bonus on success steps. success_bonus is only read by
    composite. encoder names a registered encoder when source is
    "encoder".
    """

    source: RewardSource = RewardSource.GROUND_TRUTH
    metric: DistanceMetric = field(default_factory=lambda: DistanceMetric("euclidean"))
    shaping: RewardShaping = RewardShaping.DENSE_DELTA
    success_bonus: float = 1.0
    encoder: Optional[str] = None
    encoder_params: Tuple[Tuple[str, object], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "source", RewardSource(self.source))
        object.__setattr__(self, "shaping", RewardShaping(self.shaping))
        if not math.isfinite(self.success_bonus):
            raise ConfigurationError(f"success_bonus must be finite, got {self.success_bonus!r}")
        if self.source is RewardSource.ENCODER and not self.encoder:
            raise ConfigurationError("encoder reward source requires an encoder name")


@dataclass
class RewardState:
    """Per-episode reward bookkeeping, reset with the environment."""

    prev_distance: Optional[float] = None
    goal_code: Optional[np.ndarray] = None
    step_count: int = 0
    was_attached: bool = False
    released: bool = False
    release_distance: Optional[float] = None


class CodeSource(Protocol):
    """Supplies the encoder code of the current frame (env provides this)."""

    def current_code(self) -> np.ndarray: ...


def goal_position(scene: Scene, task: TaskSpec) -> Vec3:
    if task.goal is None:
        raise ConfigurationError(f"{task.type.value} task has no goal position")
    if isinstance(task.goal, Vec3):
        return task.goal
    return get_entity_position(scene, task.goal)


def task_distance(
    scene: Scene,
    task: TaskSpec,
    reward: RewardSpec,
    state: RewardState,
    perception: Optional[CodeSource] = None,
) -> float:
    """Distance between target and goal under the configured metric."""
    if reward.source is RewardSource.ENCODER:
        if perception is None:
            raise ConfigurationError("encoder reward needs a perception code source")
        if state.goal_code is None:
            raise ConfigurationError("encoder reward used before a goal snapshot was taken")
        return compute_distance(perception.current_code(), state.goal_code, reward.metric)
    target = get_entity_position(scene, task.target)
    if task.type is TaskType.PICK:
        # distance-to-goal is undefined; report remaining lift instead
        obj = scene.find_object(task.target)
        spawn_z = obj.spawn_position.z if obj is not None else 0.0
        return max(0.0, spawn_z + task.lift_height - target.z)
    goal = goal_position(scene, task)
    return compute_distance(target.as_array(), goal.as_array(), reward.metric)


def check_success(scene: Scene, task: TaskSpec, distance: float, state: RewardState) -> bool:
    thr = task.success_threshold
    if task.type is TaskType.REACH:
        return distance < thr
    obj = scene.find_object(task.target)
    if obj is None:
        raise ConfigurationError(f"task target {task.target!r} is not in the scene")
    held = scene.robot_state.attached_object == task.target
    if task.type is TaskType.PICK:
        return held and obj.pose.position.z > obj.spawn_position.z + task.lift_height
    if task.type is TaskType.PUSH:
        return distance < thr and obj.is_resting() and not held
    if task.type is TaskType.PICK_AND_PLACE:
        return distance < thr and obj.is_resting() and not held and state.was_attached
    # throw: must have been released outside the goal region and landed inside
    return (
        distance < thr
        and obj.is_resting()
        and not held
        and state.was_attached
        and state.released
        and state.release_distance is not None
        and state.release_distance > thr
    )


def compute_reward(distance: float, state: RewardState, spec: RewardSpec, success: bool) -> float:
    delta = 0.0 if state.prev_distance is None else state.prev_distance - distance
    if spec.shaping is RewardShaping.DENSE_NEGATIVE:
        r = -distance
    elif spec.shaping is RewardShaping.DENSE_DELTA:
        r = delta
    elif spec.shaping is RewardShaping.SPARSE:
        r = 1.0 if success else 0.0
    else:
        r = delta + (spec.success_bonus if success else 0.0)
    state.prev_distance = distance
    return r


def check_termination(
    scene: Scene,
    state: RewardState,
    success: bool,
    max_steps: int,
) -> Tuple[bool, Optional[TerminationReason]]:
    """Episode end check. Success outranks timeout outranks bounds."""
    if success:
        return True, TerminationReason.SUCCESS
    if state.step_count >= max_steps:
        return True, TerminationReason.TIMEOUT
    for obj in scene.objects:
        if obj.role is ObjectRole.FREE and obj.out_of_bounds:
            return True, TerminationReason.OUT_OF_BOUNDS
    return False, None
