"""Environment configuration: parsing, validation, canonical digest.

A config is a JSON object with exactly these top-level keys (unknown keys
are rejected so typos fail loudly):

  workspace         str, name in the workspace catalog           (required)
  robot             {"arm", "gripper"?, "base_position"?}        (required)
  task              {"type", "target", "goal"?, ...}             (required)
  objects           list of spawn groups                         (default [])
  cameras           list of camera specs                         (default [])
  reward            reward options                               (default {})
  randomization     {kind: {schedule?, ...params}}               (default {})
  observation_mode  "ground_truth" | "latent" | "image"          (default "ground_truth")
  seed              int                                          (default 0)
  max_steps         int >= 1                                     (default 200)

The digest is a sha256 over the canonical JSON form with defaults applied,
so two configs that mean the same thing hash the same.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .catalog import (build_robot, gripper_names, object_catalog, robot_home_q,
                      robot_names, workspace_catalog)
from .errors import ConfigurationError
from .geometry import DistanceMetric, MetricKind, Pose, Vec3
from .perception.camera import CameraSpec
from .perception.encoders import encoder_names
from .randomization import RandomizationSpec
from .robot import RobotModel
from .scene import (AreaPlacement, FixedPlacement, SpawnChoice, SpawnSpec,
                    Workspace)
from .tasks import (RewardShaping, RewardSource, RewardSpec, TaskSpec,
                    TaskType)

TOP_LEVEL_KEYS = ("workspace", "robot", "objects", "cameras", "task", "reward",
                  "randomization", "observation_mode", "seed", "max_steps")
_REQUIRED = ("workspace", "robot", "task")


class ObservationMode(str, Enum):
    GROUND_TRUTH = "ground_truth"
    LATENT = "latent"
    IMAGE = "image"


def _vec3(raw, what) -> Vec3:
    if (not isinstance(raw, (list, tuple)) or len(raw) != 3
            or not all(isinstance(v, (int, float)) for v in raw)):
        raise ConfigurationError(f"{what} must be [x, y, z] numbers, got {raw!r}")
    return Vec3(float(raw[0]), float(raw[1]), float(raw[2]))


def _require_keys(raw: Mapping, allowed: Sequence[str], what: str):
    unknown = set(raw) - set(allowed)
    if unknown:
        raise ConfigurationError(
            f"{what}: unknown keys {sorted(unknown)}; allowed: {sorted(allowed)}")


def _enum(enum_cls, value, what):
    """Coerce value into enum_cls, reporting the legal names on failure."""
    try:
        return enum_cls(value)
    except ValueError:
        legal = ", ".join(m.value for m in enum_cls)
        raise ConfigurationError(
            f"{what}: {value!r} is not one of {legal}") from None


@dataclass(frozen=True)
class EnvConfig:
    """Validated environment configuration plus its canonical raw form."""

    workspace: Workspace
    robot: RobotModel
    home_q: tuple[float, ...]
    spawns: tuple[SpawnSpec, ...]
    cameras: tuple[CameraSpec, ...]
    task: TaskSpec
    reward: RewardSpec
    randomization: RandomizationSpec
    observation_mode: ObservationMode
    seed: int
    max_steps: int
    raw: Mapping[str, object]

    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _parse_robot(raw) -> tuple[str, str, Optional[Sequence[float]]]:
    if not isinstance(raw, Mapping):
        raise ConfigurationError('robot must be an object like {"arm": "kuka_iiwa"}')
    _require_keys(raw, ("arm", "gripper", "base_position"), "robot")
    arm = raw.get("arm")
    if arm not in robot_names():
        raise ConfigurationError(
            f"unknown arm {arm!r}; known: {', '.join(robot_names())}")
    gripper = raw.get("gripper", "magnetic")
    if gripper not in gripper_names():
        raise ConfigurationError(
            f"unknown gripper {gripper!r}; known: {', '.join(gripper_names())}")
    return arm, gripper, raw.get("base_position")


def _parse_placement(raw):
    if not isinstance(raw, Mapping) or "kind" not in raw:
        raise ConfigurationError('placement needs a "kind" of "fixed" or "area"')
    kind = raw["kind"]
    if kind == "fixed":
        _require_keys(raw, ("kind", "positions"), "fixed placement")
        pos = raw.get("positions")
        if not isinstance(pos, Sequence) or not pos:
            raise ConfigurationError("fixed placement needs a list of [x, y] positions")
        out = []
        for p in pos:
            if not isinstance(p, Sequence) or len(p) != 2:
                raise ConfigurationError(f"fixed position must be [x, y], got {p!r}")
            out.append((float(p[0]), float(p[1])))
        return FixedPlacement(positions=tuple(out))
    if kind == "area":
        _require_keys(raw, ("kind", "min", "max"), "area placement")
        lo = raw.get("min")
        hi = raw.get("max")
        for v in (lo, hi):
            if not isinstance(v, Sequence) or len(v) not in (2, 3):
                raise ConfigurationError("area placement min/max must be [x, y] or [x, y, z]")
        lo = list(lo) + [0.0] * (3 - len(lo))
        hi = list(hi) + [0.0] * (3 - len(hi))
        return AreaPlacement(lo=_vec3(lo, "area min"), hi=_vec3(hi, "area max"))
    raise ConfigurationError(f"unknown placement kind {kind!r}")


def _parse_spawn(raw, idx: int) -> SpawnSpec:
    what = f"objects[{idx}]"
    if not isinstance(raw, Mapping):
        raise ConfigurationError(f"{what} must be an object")
    _require_keys(raw, ("pool", "count", "placement", "choice"), what)
    pool = raw.get("pool")
    if not isinstance(pool, Sequence) or not pool or isinstance(pool, str):
        raise ConfigurationError(f"{what}: pool must be a non-empty list of names")
    known = object_catalog()
    for name in pool:
        if name not in known:
            raise ConfigurationError(
                f"{what}: unknown object {name!r}; known: {', '.join(sorted(known))}")
    count = raw.get("count", 1)
    if isinstance(count, Sequence) and not isinstance(count, str):
        if len(count) != 2:
            raise ConfigurationError(f"{what}: count range must be [lo, hi]")
        count = (int(count[0]), int(count[1]))
    elif isinstance(count, int):
        count = int(count)
    else:
        raise ConfigurationError(f"{what}: count must be an int or [lo, hi]")
    placement = _parse_placement(raw.get("placement", {"kind": "area",
                                                       "min": [-0.2, -0.3],
                                                       "max": [0.2, 0.3]}))
    choice = raw.get("choice", "all_in_order")
    return SpawnSpec(pool=tuple(pool), count=count, placement=placement,
                     choice=_enum(SpawnChoice, choice, "spawn choice"))


def _parse_camera(raw, idx: int) -> CameraSpec:
    what = f"cameras[{idx}]"
    if not isinstance(raw, Mapping):
        raise ConfigurationError(f"{what} must be an object")
    _require_keys(raw, ("name", "position", "look_at", "fov_y", "resolution"), what)
    name = raw.get("name", f"cam{idx}")
    res = raw.get("resolution", [128, 128])
    if not isinstance(res, Sequence) or len(res) != 2:
        raise ConfigurationError(f"{what}: resolution must be [width, height]")
    return CameraSpec(
        name=str(name),
        position=_vec3(raw.get("position", [0.9, 0.9, 0.9]), f"{what} position"),
        look_at=_vec3(raw.get("look_at", [0.0, 0.0, 0.1]), f"{what} look_at"),
        fov_y=float(raw.get("fov_y", 1.0)),
        resolution=(int(res[0]), int(res[1])),
    )


def _parse_task(raw) -> TaskSpec:
    if not isinstance(raw, Mapping):
        raise ConfigurationError("task must be an object")
    _require_keys(raw, ("type", "target", "goal", "success_threshold",
                        "lift_height"), "task")
    if "type" not in raw or "target" not in raw:
        raise ConfigurationError('task needs "type" and "target"')
    goal = raw.get("goal")
    if isinstance(goal, Sequence) and not isinstance(goal, str):
        goal = _vec3(goal, "task goal")
    kwargs = {}
    if "success_threshold" in raw:
        kwargs["success_threshold"] = float(raw["success_threshold"])
    if "lift_height" in raw:
        kwargs["lift_height"] = float(raw["lift_height"])
    return TaskSpec(type=_enum(TaskType, raw["type"], "task type"),
                    target=str(raw["target"]),
                    goal=goal, **kwargs)


def _parse_metric(raw) -> DistanceMetric:
    if raw is None:
        return DistanceMetric("euclidean")
    if isinstance(raw, str):
        return DistanceMetric(_enum(MetricKind, raw, "metric kind"))
    if isinstance(raw, Mapping):
        _require_keys(raw, ("kind", "diag"), "reward metric")
        diag = raw.get("diag")
        kind = _enum(MetricKind, raw.get("kind", "euclidean"), "metric kind")
        return DistanceMetric(kind,
                              None if diag is None else tuple(float(v) for v in diag))
    raise ConfigurationError(f"metric must be a name or object, got {raw!r}")


def _parse_reward(raw) -> RewardSpec:
    if not isinstance(raw, Mapping):
        raise ConfigurationError("reward must be an object")
    _require_keys(raw, ("source", "metric", "shaping", "success_bonus",
                        "encoder", "encoder_params"), "reward")
    params = raw.get("encoder_params", {})
    if not isinstance(params, Mapping):
        raise ConfigurationError("reward encoder_params must be an object")
    enc = raw.get("encoder")
    if enc is not None and enc not in encoder_names():
        raise ConfigurationError(
            f"unknown encoder {enc!r}; registered: {', '.join(encoder_names())}")
    return RewardSpec(
        source=_enum(RewardSource, raw.get("source", "ground_truth"),
                     "reward source"),
        metric=_parse_metric(raw.get("metric")),
        shaping=_enum(RewardShaping, raw.get("shaping", "dense_delta"),
                      "reward shaping"),
        success_bonus=float(raw.get("success_bonus", 1.0)),
        encoder=enc,
        encoder_params=tuple(sorted((str(k), v) for k, v in params.items())),
    )


def parse_config(raw: Mapping[str, object]) -> EnvConfig:
    """Validate a config mapping into an EnvConfig."""
    if not isinstance(raw, Mapping):
        raise ConfigurationError("config root must be a JSON object")
    _require_keys(raw, TOP_LEVEL_KEYS, "config")
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigurationError(f'config is missing required key "{key}"')

    ws_name = raw["workspace"]
    catalog = workspace_catalog()
    if ws_name not in catalog:
        raise ConfigurationError(
            f"unknown workspace {ws_name!r}; known: {', '.join(sorted(catalog))}")
    workspace = catalog[ws_name]

    arm, gripper, base_raw = _parse_robot(raw["robot"])
    base = workspace.default_base if base_raw is None else Pose.from_position(
        _vec3(base_raw, "robot base_position"))
    robot = build_robot(arm, gripper, base)
    home = tuple(robot_home_q(arm))

    spawns = tuple(_parse_spawn(s, i)
                   for i, s in enumerate(raw.get("objects", [])))
    cameras = tuple(_parse_camera(c, i)
                    for i, c in enumerate(raw.get("cameras", [])))
    names = [c.name for c in cameras]
    if len(names) != len(set(names)):
        raise ConfigurationError("camera names must be unique")

    task = _parse_task(raw["task"])
    reward = _parse_reward(raw.get("reward", {}))
    rand = RandomizationSpec.from_config(raw.get("randomization", {}))
    mode = _enum(ObservationMode, raw.get("observation_mode", "ground_truth"),
                 "observation_mode")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigurationError(f"seed must be an int, got {seed!r}")
    max_steps = raw.get("max_steps", 200)
    if not isinstance(max_steps, int) or max_steps < 1:
        raise ConfigurationError(f"max_steps must be a positive int, got {max_steps!r}")

    if (mode in (ObservationMode.LATENT, ObservationMode.IMAGE)
            or reward.source is RewardSource.ENCODER) and not cameras:
        raise ConfigurationError(
            f"observation_mode {mode.value!r} / encoder rewards require at least one camera")

    # validate task target against the spawn pools (literal "ee" is fine)
    if task.target != "ee":
        spawnable = set()
        for s in spawns:
            spawnable.update(_instance_ids(s))
        if task.target not in spawnable:
            raise ConfigurationError(
                f"task target {task.target!r} cannot come from the object pools "
                f"(possible ids: {', '.join(sorted(spawnable)) or 'none'})")
    if isinstance(task.goal, str) and task.goal not in ("ee",):
        spawnable = set()
        for s in spawns:
            spawnable.update(_instance_ids(s))
        if task.goal not in spawnable:
            raise ConfigurationError(
                f"task goal entity {task.goal!r} cannot come from the object pools")

    canonical = _with_defaults(raw)
    return EnvConfig(workspace=workspace, robot=robot, home_q=home,
                     spawns=spawns, cameras=cameras, task=task, reward=reward,
                     randomization=rand, observation_mode=mode, seed=seed,
                     max_steps=max_steps, raw=canonical)


def _instance_ids(spec: SpawnSpec) -> set[str]:
    """Every object id this spawn group could produce (bare and suffixed)."""
    out = set()
    cap = spec.max_count()
    for name in spec.pool:
        out.add(name)
        for k in range(1, cap + 1):
            out.add(f"{name}_{k}")
    return out


def _with_defaults(raw: Mapping[str, object]) -> dict:
    out = {
        "objects": [], "cameras": [], "reward": {}, "randomization": {},
        "observation_mode": "ground_truth", "seed": 0, "max_steps": 200,
    }
    out.update({k: raw[k] for k in raw})
    return out


def load_config(path) -> EnvConfig:
    """Read and validate a JSON config file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {p} is not valid JSON: {exc}") from exc
    return parse_config(raw)


def builtin_config_path(name: str) -> Path:
    """Path of a packaged example config such as "reach"."""
    from importlib import resources
    base = resources.files("manipsim.data") / "configs" / f"{name}.json"
    with resources.as_file(base) as p:
        return Path(p)
