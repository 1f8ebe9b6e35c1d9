"""Built-in agents: random baseline, privileged greedy, linear policy.

The greedy agent plans one step at a time in joint space: it probes each
arm joint with its maximum step in both directions through forward
kinematics, keeps the sign that shrinks the distance to its current tool
target, then line-searches a global scale. Task phases (approach, attach,
carry, release, retreat) are small state machines on top of that primitive.

Agents see the environment itself. The random and linear agents only read
the observation vector; the greedy agent additionally reads privileged
scene state, which is its documented contract.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AgentError, ConfigurationError
from .geometry import Vec3
from .robot import fk_ee
from .scene import EE_RADIUS, GRAVITY
from .tasks import TaskType, goal_position

_SCALES = (1.0, 0.5, 0.25, 0.1, 0.05)


class Agent:
    """Episode-scoped policy: reset() is called once per episode."""

    name = "agent"

    def reset(self, env, rng: np.random.Generator) -> None:
        """rng is the per-episode agent stream; keep it if you draw."""

    def act(self, env, obs) -> np.ndarray:
        raise NotImplementedError


class RandomAgent(Agent):
    """Uniform actions in [-1, 1]; the floor every policy must beat."""

    name = "random"

    def __init__(self):
        self._rng: Optional[np.random.Generator] = None

    def reset(self, env, rng) -> None:
        self._rng = rng

    def act(self, env, obs) -> np.ndarray:
        if self._rng is None:
            raise AgentError("RandomAgent.act() before reset()")
        return self._rng.uniform(-1.0, 1.0, size=env.action_dim)


class GreedyAgent(Agent):
    """Privileged scripted agent for every task type."""

    name = "greedy"

    def __init__(self):
        self._phase = "approach"
        self._staging: Optional[Vec3] = None
        self._push_line: Optional[Vec3] = None

    def reset(self, env, rng) -> None:
        self._phase = "approach"
        self._staging = None
        self._push_line = None

    # ------------------------------------------------------------- primitives

    @staticmethod
    def _move_toward(env, target: Vec3, grip: float, scales=_SCALES) -> np.ndarray:
        """Joint-space descent of |ee - target| with a global scale search."""
        robot = env.robot
        q = env.scene.robot_state.q
        n_arm = len(robot.joints)
        lo, hi = robot.joint_limits()
        steps = np.array([j.max_step for j in robot.actuated_joints])

        def dist(qv) -> float:
            return fk_ee(robot, qv).position.distance_to(target)

        base = dist(q)
        direction = np.zeros(len(robot.actuated_joints))
        for i in range(n_arm):
            # probe coarse and fine so a full step overshooting the target
            # does not mask a joint that helps at small amplitude
            best_i, sign_i = base, 0.0
            for mag in (1.0, 0.1):
                for sign in (1.0, -1.0):
                    trial = q.copy()
                    trial[i] = min(max(q[i] + sign * mag * steps[i], lo[i]), hi[i])
                    d = dist(trial)
                    if d < best_i:
                        best_i, sign_i = d, sign
            direction[i] = sign_i
        best_scale, best_d = 0.0, base
        for s in scales:
            qv = np.clip(q + direction * s * steps, lo, hi)
            d = dist(qv)
            if d < best_d:
                best_scale, best_d = s, d
        action = direction * best_scale
        action = GreedyAgent._with_grip(env, action, grip)
        return action

    @staticmethod
    def _with_grip(env, arm_action: np.ndarray, grip: float) -> np.ndarray:
        """Append/overwrite the gripper channels: grip > 0 asks to hold."""
        robot = env.robot
        n_arm = len(robot.joints)
        action = np.zeros(env.action_dim)
        action[: len(arm_action)] = arm_action
        if robot.gripper is None:
            return action
        if env.action_dim > len(robot.actuated_joints):
            action[-1] = grip          # magnetic attach channel
        else:
            action[n_arm:] = grip      # finger joints: close toward +1
        return action

    @staticmethod
    def _surface_gap(env, obj) -> float:
        ee = env.scene.ee_pose.position
        return ee.distance_to(obj.pose.position) - obj.shape.bounding_radius

    # ------------------------------------------------------------------ act

    def act(self, env, obs) -> np.ndarray:
        task = env.config.task
        scene = env.scene
        if task.type is TaskType.REACH:
            return self._move_toward(env, goal_position(scene, task), -1.0)
        obj = scene.find_object(task.target)
        if obj is None:
            raise AgentError(f"greedy target {task.target!r} is not in the scene")
        held = scene.robot_state.attached_object == task.target
        if task.type is TaskType.PICK:
            return self._act_pick(env, task, obj, held)
        if task.type is TaskType.PICK_AND_PLACE:
            return self._act_place(env, task, obj, held)
        if task.type is TaskType.PUSH:
            return self._act_push(env, task, obj)
        return self._act_throw(env, task, obj, held)

    @staticmethod
    def _carry_target(env, obj, obj_target: Vec3) -> Vec3:
        """Tool point that parks the held object at obj_target (rigid offset)."""
        ee = env.scene.ee_pose.position
        p = obj.pose.position
        return Vec3(obj_target.x + (ee.x - p.x),
                    obj_target.y + (ee.y - p.y),
                    obj_target.z + (ee.z - p.z))

    def _act_pick(self, env, task, obj, held) -> np.ndarray:
        if held:
            s = obj.spawn_position
            want = Vec3(s.x, s.y, s.z + task.lift_height + 0.03)
            return self._move_toward(env, self._carry_target(env, obj, want), 1.0)
        gate = env.robot.gripper.grasp_radius * 0.6 if env.robot.gripper else 0.0
        grip = 1.0 if self._surface_gap(env, obj) <= gate else -1.0
        return self._move_toward(env, obj.pose.position, grip)

    def _act_place(self, env, task, obj, held) -> np.ndarray:
        scene = env.scene
        goal = goal_position(scene, task)
        thr = task.success_threshold
        if self._phase == "retreat":
            away = Vec3(goal.x, goal.y, goal.z + 0.25)
            return self._move_toward(env, away, -1.0)
        if held:
            p = obj.pose.position
            dxy = math.hypot(p.x - goal.x, p.y - goal.y)
            if self._phase != "lower":
                self._phase = "carry"
            if self._phase == "carry":
                if dxy < thr * 0.5:
                    self._phase = "lower"
                else:
                    # transit at altitude; joint-space paths sag, keep clearance
                    cruise_z = max(goal.z, obj.spawn_position.z) + 0.15
                    cruise = Vec3(goal.x, goal.y, cruise_z)
                    return self._move_toward(
                        env, self._carry_target(env, obj, cruise), 1.0)
            # lower: descend over the goal in small bites so the joint-space
            # move cannot trade a big sideways drift for altitude; the abort
            # band is wider than the entry gate to prevent limit cycles
            if dxy > thr * 1.6:
                self._phase = "carry"
                cruise_z = max(goal.z, obj.spawn_position.z) + 0.15
                return self._move_toward(
                    env, self._carry_target(env, obj,
                                            Vec3(goal.x, goal.y, cruise_z)), 1.0)
            if p.z < goal.z + 0.06 and dxy < thr * 0.8:
                # stationary release: a still tool means the object just drops
                self._phase = "retreat"
                return self._with_grip(env, np.zeros(len(env.robot.joints)), -1.0)
            low = Vec3(goal.x, goal.y, max(p.z - 0.04, goal.z + 0.02))
            return self._move_toward(env, self._carry_target(env, obj, low), 1.0)
        gate = env.robot.gripper.grasp_radius * 0.6 if env.robot.gripper else 0.0
        grip = 1.0 if self._surface_gap(env, obj) <= gate else -1.0
        return self._move_toward(env, obj.pose.position, grip)

    def _act_push(self, env, task, obj) -> np.ndarray:
        scene = env.scene
        goal = goal_position(scene, task)
        c = obj.pose.position
        to_goal = Vec3(goal.x - c.x, goal.y - c.y, 0.0)
        dist_xy = to_goal.norm()
        if dist_xy < task.success_threshold * 0.5:
            # close enough: hold still so the object settles where it is
            return self._with_grip(env, np.zeros(len(env.robot.joints)), -1.0)
        u = to_goal.scale(1.0 / dist_xy)
        # contact geometry: the tool presses at a raised height, which keeps
        # the arm away from the table; horizontal reach shrinks accordingly
        press_z = c.z + 0.03
        dz = press_z - c.z
        reach = EE_RADIUS + obj.shape.bounding_radius
        reach_xy = math.sqrt(max(reach * reach - dz * dz, 1e-6))
        ee = scene.ee_pose.position
        if self._phase == "push":
            # the stroke line is frozen at stroke start: retargeting every
            # step couples the tool to the object's lateral drift and the
            # pair ends up orbiting instead of advancing
            lu = self._push_line or u
            behind = (ee.x - c.x) * lu.x + (ee.y - c.y) * lu.y
            off_line = u.x * lu.x + u.y * lu.y < 0.94  # drifted > ~20 deg
            if behind > -0.02 or off_line:
                self._phase = "approach"
                self._push_line = None
        if self._phase == "approach":
            # swing above the far side first so the tool never plows the
            # object away from the goal on its way in
            above = Vec3(c.x - u.x * (reach_xy + 0.05),
                         c.y - u.y * (reach_xy + 0.05), c.z + 0.15)
            if math.hypot(ee.x - above.x, ee.y - above.y) < 0.05:
                self._phase = "descend"
            else:
                act = self._move_toward(env, above, -1.0)
                if np.any(act[: len(env.robot.joints)]):
                    return act
                self._phase = "descend"  # wedged; try from where we are
        if self._phase == "descend":
            drop = Vec3(c.x - u.x * (reach_xy + 0.05),
                        c.y - u.y * (reach_xy + 0.05), press_z)
            if abs(ee.z - press_z) < 0.03 and \
                    math.hypot(ee.x - drop.x, ee.y - drop.y) < 0.08:
                self._phase = "push"
                self._push_line = u
            else:
                act = self._move_toward(env, drop, -1.0,
                                        scales=(0.5, 0.25, 0.1, 0.05))
                if np.any(act[: len(env.robot.joints)]):
                    return act
                self._phase = "push"  # wedged short of the drop point
                self._push_line = u
        # push: drive the tool through the contact patch in small steps; the
        # object is displaced by at most the tool's own step, so it keeps
        # fleeing ahead quasi-statically and never overshoots by much
        lu = self._push_line or u
        through = Vec3(c.x + lu.x * 0.05, c.y + lu.y * 0.05, press_z)
        return self._move_toward(env, through, -1.0, scales=(0.1, 0.05))

    def _act_throw(self, env, task, obj, held) -> np.ndarray:
        from .scene import DT
        scene = env.scene
        goal = goal_position(scene, task)
        thr = task.success_threshold
        if not held:
            if self._phase == "ballistic":
                # already thrown: keep the tool still while it flies
                return self._with_grip(env, np.zeros(len(env.robot.joints)), -1.0)
            gate = env.robot.gripper.grasp_radius * 0.6 if env.robot.gripper else 0.0
            grip = 1.0 if self._surface_gap(env, obj) <= gate else -1.0
            return self._move_toward(env, obj.pose.position, grip)
        p = obj.pose.position
        if self._staging is None:
            # stage the toss short of the goal: far enough out that release
            # still counts as a throw, close enough that a gentle flick lands
            off = max(2.5 * thr, 0.12)
            to_goal = Vec3(goal.x - p.x, goal.y - p.y, 0.0)
            n = to_goal.norm()
            u = to_goal.scale(1.0 / n) if n > 1e-9 else Vec3(1.0, 0.0, 0.0)
            self._staging = Vec3(goal.x - u.x * off, goal.y - u.y * off,
                                 obj.rest_height() + 0.08)
        stage = self._staging
        d_stage = p.distance_to(stage)
        if self._phase != "toss":
            self._phase = "carry"
            if d_stage < 0.03:
                self._phase = "toss"
            else:
                return self._move_toward(
                    env, self._carry_target(env, obj, stage), 1.0)
        # toss: pick the swing magnitude whose ballistic landing point is
        # nearest the goal; release only when it lands inside the circle.
        # Landing is predicted by replaying the integrator exactly: carry to
        # the post-swing pose, inherit the tool velocity, then step gravity.
        robot = env.robot
        q = scene.robot_state.q
        lo, hi = robot.joint_limits()
        steps = np.array([j.max_step for j in robot.actuated_joints])
        swing_aim = Vec3(goal.x + (goal.x - p.x) * 4.0,
                         goal.y + (goal.y - p.y) * 4.0, stage.z)
        probe = self._move_toward(env, self._carry_target(env, obj, swing_aim),
                                  1.0, scales=(1.0,))
        direction = probe[: len(robot.actuated_joints)]
        ee_now = scene.ee_pose
        rel = scene.attached_rel
        rest = obj.rest_height()
        best_s, best_err = None, math.inf
        for s in (1.0, 0.75, 0.5, 0.35, 0.25, 0.15, 0.1, 0.05):
            qv = np.clip(q + direction * s * steps, lo, hi)
            ee_next = fk_ee(robot, qv)
            pos = ee_next.compose(rel).position if rel is not None else p
            v = Vec3((ee_next.position.x - ee_now.position.x) / DT,
                     (ee_next.position.y - ee_now.position.y) / DT,
                     (ee_next.position.z - ee_now.position.z) / DT)
            for _ in range(400):
                v = Vec3(v.x, v.y, v.z + GRAVITY * DT)
                pos = Vec3(pos.x + v.x * DT, pos.y + v.y * DT, pos.z + v.z * DT)
                if pos.z < rest:
                    break
            err = math.hypot(pos.x - goal.x, pos.y - goal.y)
            if err < best_err:
                best_s, best_err = s, err
        if best_err <= thr * 0.7:
            self._phase = "ballistic"
            return self._with_grip(env, direction * best_s, -1.0)
        # no swing lands inside yet: walk the staging point toward the goal
        # (changes posture and shortens the needed range), then re-station
        if d_stage < 0.03:
            g_dx, g_dy = goal.x - stage.x, goal.y - stage.y
            g_n = math.hypot(g_dx, g_dy)
            if g_n > max(1.5 * thr, 0.1):
                self._staging = Vec3(stage.x + g_dx / g_n * 0.015,
                                     stage.y + g_dy / g_n * 0.015, stage.z)
        return self._move_toward(env, self._carry_target(env, obj, self._staging),
                                 1.0, scales=(0.25, 0.1, 0.05))


class LinearPolicyAgent(Agent):
    """action = clip(W @ obs + b, -1, 1); parameters come from CEM."""

    name = "linear"

    def __init__(self, weights: np.ndarray, bias: np.ndarray,
                 obs_digest: Optional[str] = None):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.obs_digest = obs_digest
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ConfigurationError("linear policy needs W (a, o) and b (a,)")

    def verify_layout(self, env) -> None:
        """Refuse to run against an observation layout the policy was not
        trained on; a silently transposed or re-ordered vector would still
        have the right length."""
        if self.obs_digest is None:
            return
        have = env.observation_digest()
        if have != self.obs_digest:
            raise ConfigurationError(
                f"policy was trained on observation layout {self.obs_digest}, "
                f"environment provides {have}")

    @staticmethod
    def from_flat(theta: np.ndarray, obs_dim: int, action_dim: int) -> "LinearPolicyAgent":
        need = action_dim * obs_dim + action_dim
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (need,):
            raise ConfigurationError(
                f"flat policy needs {need} parameters, got {theta.shape}")
        w = theta[: action_dim * obs_dim].reshape(action_dim, obs_dim)
        b = theta[action_dim * obs_dim:]
        return LinearPolicyAgent(w, b)

    def act(self, env, obs) -> np.ndarray:
        v = obs.vector
        if v.shape[0] != self.weights.shape[1]:
            raise AgentError(
                f"policy expects obs dim {self.weights.shape[1]}, got {v.shape[0]}")
        return np.clip(self.weights @ v + self.bias, -1.0, 1.0)

    def save(self, path, meta: Optional[dict] = None) -> None:
        blob = {
            "kind": "linear",
            "obs_dim": self.weights.shape[1],
            "action_dim": self.weights.shape[0],
            "obs_digest": self.obs_digest,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }
        if meta:
            blob["meta"] = meta
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(blob, fh, indent=1)
            fh.write("\n")

    @staticmethod
    def load(path) -> "LinearPolicyAgent":
        with open(path, encoding="utf-8") as fh:
            blob = json.load(fh)
        if blob.get("kind") != "linear":
            raise ConfigurationError(f"{path}: not a linear policy file")
        return LinearPolicyAgent(np.array(blob["weights"]), np.array(blob["bias"]),
                                 obs_digest=blob.get("obs_digest"))


def make_agent(name: str, policy_path=None) -> Agent:
    """Agents addressable by name from the CLI and the session service."""
    if name == "random":
        return RandomAgent()
    if name == "greedy":
        return GreedyAgent()
    if name == "cem_file":
        if policy_path is None:
            raise ConfigurationError("cem_file agent needs a policy path")
        return LinearPolicyAgent.load(policy_path)
    raise ConfigurationError(
        f"unknown agent {name!r}; known: random, greedy, cem_file")
