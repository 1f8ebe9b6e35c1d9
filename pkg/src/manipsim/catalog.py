"""Shipped catalogs: robots, grippers, workspaces, object prototypes.

Catalogs live as JSON under manipsim/data and are parsed once per process.
Object prototypes are template SceneObjects; spawning copies them.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from typing import Dict, Optional, Tuple

from .errors import ConfigurationError
from .geometry import Pose, Vec3
from .robot import GripperModel, JointSpec, RobotModel
from .scene import ObjectRole, SceneObject, ShapePrimitive, Workspace


def _load_json(name: str) -> dict:
    path = resources.files("manipsim.data").joinpath(name)
    with path.open("r", encoding="utf-8") as fh:
        return json.load(fh)


def _parse_joint(raw: dict) -> JointSpec:
    return JointSpec(
        name=raw["name"],
        kind=raw["kind"],
        axis=Vec3.from_seq(raw["axis"]),
        origin=Pose.from_position(Vec3.from_seq(raw["origin"])),
        limits=(raw["limits"][0], raw["limits"][1]),
        max_step=raw["max_step"],
    )


@lru_cache(maxsize=1)
def gripper_catalog() -> Dict[str, GripperModel]:
    out = {}
    for name, raw in _load_json("grippers.json").items():
        out[name] = GripperModel(
            name=name,
            kind=raw["kind"],
            joints=tuple(_parse_joint(j) for j in raw["joints"]),
            grasp_radius=raw["grasp_radius"],
            tool_offset=Pose.from_position(Vec3(0.0, 0.0, float(raw["tool_offset"]))),
            tactile_sensor_count=int(raw["tactile_sensors"]),
        )
    return out


@lru_cache(maxsize=1)
def _robot_raw() -> dict:
    return _load_json("robots.json")


def robot_names() -> Tuple[str, ...]:
    return tuple(_robot_raw().keys())


def gripper_names() -> Tuple[str, ...]:
    return tuple(gripper_catalog().keys()) + ("none",)


def robot_home_q(name: str) -> Tuple[float, ...]:
    raw = _robot_raw().get(name)
    if raw is None:
        raise ConfigurationError(f"unknown robot {name!r}")
    return tuple(float(v) for v in raw["home_q"])


def build_robot(name: str, gripper_name: Optional[str], base_pose: Pose) -> RobotModel:
    """Assemble a robot from the catalogs. gripper_name None/"none" fits no gripper."""
    raw = _robot_raw().get(name)
    if raw is None:
        raise ConfigurationError(f"unknown robot {name!r}; known: {', '.join(robot_names())}")
    gripper = None
    tool = Pose.identity()
    if gripper_name not in (None, "none"):
        gripper = gripper_catalog().get(gripper_name)
        if gripper is None:
            raise ConfigurationError(
                f"unknown gripper {gripper_name!r}; known: {', '.join(gripper_names())}"
            )
        tool = gripper.tool_offset
    flange = Pose.from_position(Vec3(0.0, 0.0, float(raw["flange_offset"])))
    return RobotModel(
        name=name,
        base_pose=base_pose,
        joints=tuple(_parse_joint(j) for j in raw["joints"]),
        ee_offset=flange.compose(tool),
        gripper=gripper,
    )


@lru_cache(maxsize=1)
def workspace_catalog() -> Dict[str, Workspace]:
    out = {}
    for name, raw in _load_json("workspaces.json").items():
        lo, hi = raw["bounds"]
        out[name] = Workspace(
            name=name,
            bounds_min=Vec3.from_seq(lo),
            bounds_max=Vec3.from_seq(hi),
            default_base=Pose.from_position(Vec3.from_seq(raw["base"])),
            plane_lock=raw.get("plane_lock"),
            fixtures=tuple((f[0], (float(f[1][0]), float(f[1][1]))) for f in raw.get("fixtures", [])),
        )
    return out


@lru_cache(maxsize=1)
def object_catalog() -> Dict[str, SceneObject]:
    out = {}
    for name, raw in _load_json("objects.json").items():
        color = tuple(float(c) for c in raw["color"])
        if len(color) != 4:
            raise ConfigurationError(f"object {name!r}: color must be RGBA")
        out[name] = SceneObject(
            id=name,
            shape=ShapePrimitive(kind=raw["shape"]["kind"], dims=tuple(raw["shape"]["dims"])),
            pose=Pose.identity(),
            color=color,
            graspable=bool(raw["graspable"]),
            role=ObjectRole(raw["role"]),
        )
    return out
