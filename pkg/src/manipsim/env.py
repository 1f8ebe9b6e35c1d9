"""The episodic manipulation environment.

Step order is fixed: clamp + apply the action, run physics against the tool
sweep, fire every_step randomization, then observe, measure task distance,
check success, pay reward, and check termination. Rendering is lazy and
cached per step; pulling frames twice never advances any random stream.

Episodes are addressed by (config seed, episode index). reset() picks the
next index; reset(episode=k) pins one, which is how parallel evaluation and
replay address identical episodes from different processes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from .config import EnvConfig, ObservationMode, load_config, parse_config
from .errors import AgentError, ConfigurationError, LifecycleError
from .geometry import Pose, Vec3, compute_distance
from .perception.camera import CameraSpec
from .perception.encoders import make_encoder
from .perception.render import Image, render
from .randomization import Randomizer, apply_postprocess
from .robot import RobotState, apply_action, attach_desire
from .scene import (DT, ObjectRole, Scene, SceneObject, spawn_objects,
                    step_physics)
from .seeding import RandomStreams, frame_stream
from .tasks import (RewardSource, RewardState, TaskType, TerminationReason,
                    check_success, check_termination, compute_reward,
                    goal_position, task_distance)
from .visuals import LightingState, default_lighting

GOAL_MARKER_ID = "goal"


@dataclass
class Observation:
    """vector is always present; images only in image observation mode."""

    vector: np.ndarray
    images: Optional[Dict[str, Image]] = None


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    reason: Optional[TerminationReason]
    info: Dict[str, object] = field(default_factory=dict)


class Environment:
    """One configured world; call reset() before step()."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.robot = config.robot
        self._randomizer = Randomizer(config.randomization)
        self._next_episode = 0
        self.episode: Optional[int] = None
        self.scene: Optional[Scene] = None
        self.reward_state = RewardState()
        self._streams: Optional[RandomStreams] = None
        self._cameras: List[CameraSpec] = list(config.cameras)
        self._lighting: LightingState = default_lighting()
        self._frames: Optional[Dict[str, Image]] = None
        self._code: Optional[np.ndarray] = None
        self._encoder = None
        self._needs_encoder = (
            config.reward.source is RewardSource.ENCODER
            or config.observation_mode is ObservationMode.LATENT)
        if self._needs_encoder:
            name, params = self._encoder_choice()
            self._encoder = make_encoder(name, params, (config.task.target,))

    def _encoder_choice(self):
        cfg = self.config
        if cfg.reward.source is RewardSource.ENCODER:
            return cfg.reward.encoder, dict(cfg.reward.encoder_params)
        return "downsample", {"k": 4}

    # ------------------------------------------------------------------ reset

    def reset(self, episode: Optional[int] = None) -> Observation:
        if episode is None:
            episode = self._next_episode
        if episode < 0:
            raise ConfigurationError(f"episode index must be >= 0, got {episode}")
        self._next_episode = episode + 1
        self.episode = episode
        cfg = self.config
        streams = RandomStreams(cfg.seed, episode)
        self._streams = streams

        scene = self._build_scene(streams)
        self.scene = scene
        self._cameras = list(cfg.cameras)
        self._lighting = default_lighting()
        self._cameras, self._lighting = self._randomizer.apply_reset(
            scene, self._cameras, self._lighting, streams)
        scene.refresh_fk()

        self.reward_state = RewardState()
        self._invalidate_frames()
        if self._encoder is not None:
            self._encoder.reset()
        if cfg.reward.source is RewardSource.ENCODER:
            self.reward_state.goal_code = self._goal_snapshot_code()
        return self._observe()

    def _build_scene(self, streams: RandomStreams) -> Scene:
        cfg = self.config
        state = RobotState(
            q=np.array(cfg.home_q, dtype=np.float64),
            tactile=np.zeros(self.robot.tactile_sensor_count))
        scene = Scene(workspace=cfg.workspace, robot=self.robot,
                      robot_state=state)
        from .catalog import object_catalog
        catalog = object_catalog()
        # fixtures first so free objects must avoid them
        for name, (fx, fy) in cfg.workspace.fixtures:
            proto = catalog.get(name)
            if proto is None:
                raise ConfigurationError(f"workspace fixture {name!r} is not in the catalog")
            fixture = _instantiate(proto, name)
            fixture.role = ObjectRole.FIXTURE
            half = fixture.shape.half_height
            fixture.pose = Pose.from_position(Vec3(fx, fy, half))
            fixture.spawn_position = fixture.pose.position
            scene.objects.append(fixture)
        rng = streams.get("spawn")
        counter: Dict[str, int] = {}
        for spec in cfg.spawns:
            spawn_objects(scene, spec, catalog, rng, counter)
        if isinstance(cfg.task.goal, Vec3):
            marker = _goal_marker(catalog, cfg.task.goal)
            scene.objects.append(marker)
        scene.refresh_fk()
        return scene

    # ------------------------------------------------------------------- step

    def step(self, action) -> StepResult:
        if self.scene is None:
            raise LifecycleError("step() before reset()")
        arr = np.asarray(action, dtype=np.float64)
        if arr.ndim != 1:
            raise AgentError(f"action must be a flat vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise AgentError("action contains non-finite values")
        arr = np.clip(arr, -1.0, 1.0)

        scene = self.scene
        ee_before = scene.ee_pose
        scene.robot_state = apply_action(self.robot, scene.robot_state, arr)
        scene.refresh_fk()
        ee_after = scene.ee_pose
        attach = attach_desire(self.robot, scene.robot_state, arr)
        grasp = self.robot.gripper.grasp_radius if self.robot.gripper else None
        step_physics(scene, ee_before, ee_after, attach, DT, grasp)
        self._track_grasp_lifecycle()

        self._cameras, self._lighting = self._randomizer.apply_step(
            scene, self._cameras, self._lighting, self._streams)
        self.reward_state.step_count += 1
        self._invalidate_frames()

        held = scene.robot_state.attached_object is not None
        if scene.robot_state.tactile.size:
            scene.robot_state.tactile[:] = 1.0 if held else 0.0

        obs = self._observe()
        distance = self._distance()
        success = check_success(scene, self.config.task, distance, self.reward_state)
        reward = compute_reward(distance, self.reward_state, self.config.reward, success)
        done, reason = check_termination(scene, self.reward_state, success,
                                         self.config.max_steps)
        info = {
            "distance": distance,
            "success": success,
            "attached": scene.robot_state.attached_object,
            "step": self.reward_state.step_count,
        }
        return StepResult(obs, reward, done, reason, info)

    def _track_grasp_lifecycle(self) -> None:
        """Record attach/release of the task target for pnp/throw success."""
        state = self.reward_state
        held = self.scene.robot_state.attached_object
        target = self.config.task.target
        if held == target and target != "ee":
            state.was_attached = True
            state.released = False
        elif state.was_attached and held is None and not state.released:
            state.released = True
            obj = self.scene.find_object(target)
            if obj is not None and self.config.task.goal is not None:
                goal = goal_position(self.scene, self.config.task)
                state.release_distance = compute_distance(
                    obj.pose.position.as_array(), goal.as_array(),
                    self.config.reward.metric)

    # ------------------------------------------------------------- perception

    def _invalidate_frames(self) -> None:
        self._frames = None
        self._code = None

    def current_distance(self) -> float:
        """Task distance for the live scene, as reported in step info."""
        if self.scene is None:
            raise LifecycleError("current_distance() before reset()")
        return self._distance()

    def observe(self) -> Observation:
        """Rebuild the observation for the live scene.

        Needed after out-of-band scene edits (teleport_object, set_joint_value)
        so a policy resuming mid-episode sees the edited world.
        """
        if self.scene is None:
            raise LifecycleError("observe() before reset()")
        return self._observe()

    def teleport_object(self, object_id: str, position: Vec3,
                        orientation=None) -> SceneObject:
        """Move a free object to a pose, resetting its dynamic state.

        Velocity and the out-of-bounds latch are cleared, the object is
        released if currently held, and the scene is flagged as manually
        intervened (its episode no longer compares against a scripted run).
        """
        if self.scene is None:
            raise LifecycleError("teleport_object() before reset()")
        scene = self.scene
        obj = scene.find_object(object_id)
        if obj is None:
            raise ConfigurationError(f"unknown object id {object_id!r}")
        if obj.role is not ObjectRole.FREE:
            raise ConfigurationError(
                f"object {object_id!r} is {obj.role.value}; only free objects move")
        if scene.robot_state.attached_object == object_id:
            scene.robot_state.attached_object = None
            scene.attached_rel = None
        obj.pose = Pose(position, orientation if orientation is not None
                        else obj.pose.orientation)
        obj.velocity = Vec3.zero()
        # re-latch against the new position: dragging an object back onto
        # the table rescues it, dropping it past the edge flags it at once
        obj.out_of_bounds = not scene.workspace.contains(obj.pose.position)
        scene.manual_intervention = True
        self._invalidate_frames()
        return obj

    def set_joint_value(self, index: int, value: float) -> float:
        """Set one actuated joint, clamped to its limits; returns the value used.

        A held object follows the tool frame, matching how stepping carries it.
        """
        if self.scene is None:
            raise LifecycleError("set_joint_value() before reset()")
        scene = self.scene
        joints = self.robot.actuated_joints
        if not 0 <= index < len(joints):
            raise ConfigurationError(
                f"joint index {index} out of range 0..{len(joints) - 1}")
        lo, hi = joints[index].limits
        clamped = min(max(float(value), lo), hi)
        scene.robot_state.q[index] = clamped
        scene.refresh_fk()
        held = scene.robot_state.attached_object
        if held is not None and scene.attached_rel is not None:
            obj = scene.find_object(held)
            if obj is not None:
                obj.pose = scene.ee_pose.compose(scene.attached_rel)
        self._invalidate_frames()
        return clamped

    def render_images(self) -> Dict[str, Image]:
        """Postprocessed frames from every camera, cached for this step."""
        if self.scene is None:
            raise LifecycleError("render_images() before reset()")
        if self._frames is None:
            frames: Dict[str, Image] = {}
            for ci, cam in enumerate(self._cameras):
                img = render(self.scene, cam, self._lighting)
                img.rgb = self._postprocess(img.rgb, ci)
                frames[cam.name] = img
            self._frames = frames
        return self._frames

    def _postprocess(self, rgb: np.ndarray, cam_index: int) -> np.ndarray:
        spec = self.config.randomization.get("postprocess")
        if spec is None:
            return rgb
        rng = frame_stream(self.config.seed, self.episode, "postprocess",
                           self.reward_state.step_count, cam_index)
        return apply_postprocess(rgb, spec.params, rng)

    def current_code(self) -> np.ndarray:
        """Encoder code of the current primary-camera frame (cached)."""
        if self._encoder is None:
            raise ConfigurationError("no encoder configured for this environment")
        if self._code is None:
            frames = self.render_images()
            primary = self._cameras[0].name
            self._code = self._encoder.encode(frames[primary])
        return self._code

    def _goal_snapshot_code(self) -> np.ndarray:
        """Encode a frame with the target drawn at the goal (grasp-free)."""
        task = self.config.task
        scene = self.scene
        if task.type is TaskType.PICK:
            obj = scene.find_object(task.target)
            if obj is None:
                raise ConfigurationError(f"task target {task.target!r} missing at reset")
            p = obj.pose.position
            goal = Vec3(p.x, p.y, obj.spawn_position.z + task.lift_height)
        else:
            goal = goal_position(scene, task)
        obj = scene.find_object(task.target)
        if obj is None:
            raise ConfigurationError(f"task target {task.target!r} missing at reset")
        above = Vec3(goal.x, goal.y, goal.z)
        overrides = {task.target: Pose(above, obj.pose.orientation)}
        cam = self._cameras[0]
        img = render(scene, cam, self._lighting, pose_overrides=overrides)
        img.rgb = self._postprocess(img.rgb, 0)
        code = self._encoder.encode(img)
        # the snapshot must not leak into the tracker's last-seen state
        self._encoder.reset()
        return code

    # ------------------------------------------------------------ observation

    def _observe(self) -> Observation:
        scene = self.scene
        mode = self.config.observation_mode
        q = scene.robot_state.q
        tactile = scene.robot_state.tactile
        if mode is ObservationMode.GROUND_TRUTH:
            ee = scene.ee_pose.position.as_array()
            target = self.config.task.target
            tpos = (np.zeros(3) if target == "ee"
                    else _object_position(scene, target))
            goal = self.config.task.goal
            if goal is None:
                gpos = np.zeros(3)
            else:
                gpos = goal_position(scene, self.config.task).as_array()
            vec = np.concatenate([q, ee, tactile, tpos, gpos])
            return Observation(vector=vec)
        if mode is ObservationMode.LATENT:
            code = self.current_code()
            return Observation(vector=np.concatenate([q, tactile, code]))
        frames = self.render_images()
        return Observation(vector=np.concatenate([q, tactile]),
                           images=dict(frames))

    def _distance(self) -> float:
        src = self if self._needs_encoder else None
        return task_distance(self.scene, self.config.task, self.config.reward,
                             self.reward_state, perception=src)

    # -------------------------------------------------------------- metadata

    @property
    def action_dim(self) -> int:
        return self.robot.action_dim

    @property
    def observation_dim(self) -> int:
        """Length of Observation.vector for this config."""
        nq = len(self.robot.actuated_joints)
        nt = self.robot.tactile_sensor_count
        mode = self.config.observation_mode
        if mode is ObservationMode.GROUND_TRUTH:
            return nq + 3 + nt + 3 + 3
        if mode is ObservationMode.LATENT:
            return nq + nt + self._encoder.dim
        return nq + nt

    def observation_layout(self) -> List[Tuple[str, int]]:
        """Ordered (section, length) pairs describing Observation.vector."""
        nq = len(self.robot.actuated_joints)
        nt = self.robot.tactile_sensor_count
        mode = self.config.observation_mode
        if mode is ObservationMode.GROUND_TRUTH:
            return [("q", nq), ("ee", 3), ("tactile", nt),
                    ("target", 3), ("goal", 3)]
        if mode is ObservationMode.LATENT:
            return [("q", nq), ("tactile", nt), ("code", self._encoder.dim)]
        return [("q", nq), ("tactile", nt)]

    def observation_digest(self) -> str:
        """Stable fingerprint of the observation layout.

        Policies pickle this next to their weights so that loading one
        against an environment with a different observation shape (or
        section order) fails loudly instead of silently misreading inputs.
        """
        text = json.dumps(self.observation_layout(), separators=(",", ":"))
        return hashlib.sha256(text.encode("ascii")).hexdigest()[:16]

    @property
    def cameras(self) -> List[CameraSpec]:
        return list(self._cameras)

    @property
    def lighting(self) -> LightingState:
        return self._lighting


def _object_position(scene: Scene, object_id: str) -> np.ndarray:
    obj = scene.find_object(object_id)
    if obj is None:
        raise ConfigurationError(f"object {object_id!r} is not in the scene")
    return obj.pose.position.as_array()


def _instantiate(proto: SceneObject, object_id: str) -> SceneObject:
    return SceneObject(
        id=object_id, shape=proto.shape, pose=proto.pose,
        color=proto.color, specular=proto.specular, texture=proto.texture,
        graspable=proto.graspable, role=proto.role,
        spawn_position=proto.spawn_position)


def _goal_marker(catalog: Mapping[str, SceneObject], goal: Vec3) -> SceneObject:
    proto = catalog.get("goal_sphere")
    if proto is None:
        raise ConfigurationError("object catalog is missing goal_sphere")
    marker = _instantiate(proto, GOAL_MARKER_ID)
    marker.role = ObjectRole.GOAL_MARKER
    marker.pose = Pose.from_position(goal)
    marker.spawn_position = goal
    return marker


def make_env(config) -> Environment:
    """Build an Environment from an EnvConfig, a mapping, or a JSON path."""
    if isinstance(config, EnvConfig):
        return Environment(config)
    if isinstance(config, Mapping):
        return Environment(parse_config(config))
    return Environment(load_config(config))
