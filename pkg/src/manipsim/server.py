"""WebSocket session service: drive simulation environments over JSON.

One WebSocket connection can own many sessions; each session wraps one
environment. Commands are JSON objects, one per WebSocket frame, each
carrying ``proto: 1``, a command ``type``, a client-chosen ``request_id``
(echoed in the reply), and — except for ``create_session`` — a
``session_id``. The server answers every command with a ``reply`` or
``error`` message and, for state-changing commands, one or more ``state``
messages. See docs/protocol.md for the full message catalog.

Concurrency: one asyncio event loop; per-session commands are serialized
by a per-session lock, so snapshots never observe a half-applied mutation.
Sessions share nothing but the registry. Sessions are owned by the
connection that created them and are closed when it disconnects.
"""

from __future__ import annotations

import asyncio
import base64
import json
import logging
import mimetypes
import time
import urllib.parse
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from websockets.asyncio.server import serve as ws_serve
from websockets.datastructures import Headers
from websockets.http11 import Response

from .agents import Agent, make_agent
from .env import Environment, make_env
from .errors import (AgentError, ConfigurationError, LifecycleError,
                     ManipSimError, ProtocolError)
from .geometry import Pose, UnitQuat, Vec3
from .seeding import stream

log = logging.getLogger(__name__)

PROTO_VERSION = 1

# Command names accepted on the wire, in catalog order.
COMMANDS = ("create_session", "reset", "step", "set_object_pose", "set_joint",
            "run_policy", "pause", "get_state", "close")

POLICY_AGENTS = ("random", "greedy", "cem_file")

MAX_POLICY_HZ = 50
MIN_FRAME_INTERVAL = 0.1  # pull-only camera frames, at most 10 Hz per session

DEFAULT_MAX_SESSIONS = 16
DEFAULT_IDLE_TIMEOUT = 600.0


class CommandError(Exception):
    """A command failed; carries the wire error code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _vec_json(v: Vec3) -> List[float]:
    return [v.x, v.y, v.z]


def _quat_json(q: UnitQuat) -> List[float]:
    return [q.w, q.x, q.y, q.z]


def _pose_json(pose: Pose) -> Dict[str, List[float]]:
    return {"position": _vec_json(pose.position),
            "orientation": _quat_json(pose.orientation)}


def _require(msg: Dict[str, Any], key: str, kinds, what: str):
    """Fetch a typed field from a command, or fail with bad_request."""
    if key not in msg:
        raise CommandError("bad_request", f"{msg['type']} needs a {key!r} field")
    value = msg[key]
    if not isinstance(value, kinds):
        raise CommandError("bad_request", f"{key!r} must be {what}")
    return value


def _opt_episode(msg: Dict[str, Any]) -> Optional[int]:
    episode = msg.get("episode")
    if episode is not None and (not isinstance(episode, int)
                                or isinstance(episode, bool)):
        raise CommandError("bad_request", "'episode' must be an integer")
    return episode


def _parse_vec3(value: Any, key: str) -> Vec3:
    if (not isinstance(value, (list, tuple)) or len(value) != 3
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool)
                       for c in value)):
        raise CommandError("bad_request", f"{key!r} must be [x, y, z] numbers")
    return Vec3(*[float(c) for c in value])


def _parse_quat(value: Any) -> UnitQuat:
    if (not isinstance(value, (list, tuple)) or len(value) != 4
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool)
                       for c in value)):
        raise CommandError("bad_request",
                           "'orientation' must be [w, x, y, z] numbers")
    try:
        return UnitQuat(*[float(c) for c in value])
    except (ValueError, ManipSimError) as exc:
        raise CommandError("bad_request", f"bad orientation: {exc}") from None


def _session_metadata(env: Environment) -> Dict[str, Any]:
    """Static facts a client needs to build its controls: joint limits for
    slider ranges, workspace bounds for the views, task thresholds for the
    chart, and which agents run_policy accepts."""
    cfg = env.config
    ws = cfg.workspace
    return {
        "action_dim": env.action_dim,
        "joints": [{"name": j.name, "limits": [j.limits[0], j.limits[1]]}
                   for j in env.robot.actuated_joints],
        "workspace": {"name": ws.name,
                      "bounds_min": _vec_json(ws.bounds_min),
                      "bounds_max": _vec_json(ws.bounds_max)},
        "task": {"type": cfg.task.type.value,
                 "target": cfg.task.target,
                 "success_threshold": cfg.task.success_threshold},
        "max_steps": cfg.max_steps,
        "cameras": [cam.name for cam in cfg.cameras],
        "agents": list(POLICY_AGENTS),
    }


@dataclass
class Session:
    """One live environment plus its wire-protocol bookkeeping."""

    id: str
    env: Environment
    connection: Any  # owning ServerConnection
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    tick: int = 0
    last_obs: Any = None
    last_reward: Optional[float] = None
    success: bool = False
    done: bool = False
    policy_task: Optional[asyncio.Task] = None
    last_activity: float = field(default_factory=time.monotonic)
    last_frame_at: float = -float("inf")

    def touch(self) -> None:
        self.last_activity = time.monotonic()

    @property
    def policy_running(self) -> bool:
        return self.policy_task is not None and not self.policy_task.done()

    def stop_policy(self) -> None:
        if self.policy_running:
            self.policy_task.cancel()
        self.policy_task = None


class SessionServer:
    """Session registry plus the per-connection protocol handler."""

    def __init__(self, max_sessions: int = DEFAULT_MAX_SESSIONS,
                 idle_timeout: float = DEFAULT_IDLE_TIMEOUT,
                 ui_dir: Optional[str] = None,
                 policy_path: Optional[str] = None,
                 default_config: Optional[Dict[str, Any]] = None):
        if max_sessions < 1:
            raise ConfigurationError("max_sessions must be >= 1")
        if idle_timeout <= 0:
            raise ConfigurationError("idle timeout must be positive")
        self.max_sessions = max_sessions
        self.idle_timeout = idle_timeout
        self.ui_dir = Path(ui_dir).resolve() if ui_dir else None
        self.policy_path = policy_path
        self.default_config = default_config
        self.sessions: Dict[str, Session] = {}
        self._registry_lock = asyncio.Lock()

    # ------------------------------------------------------------ lifecycle

    async def handle_connection(self, connection) -> None:
        """Serve one client until it disconnects, then reap its sessions."""
        try:
            async for raw in connection:
                await self._handle_raw(connection, raw)
        finally:
            await self._close_connection_sessions(connection)

    async def _close_connection_sessions(self, connection) -> None:
        async with self._registry_lock:
            owned = [s for s in self.sessions.values()
                     if s.connection is connection]
            for sess in owned:
                sess.stop_policy()
                del self.sessions[sess.id]

    async def reap_idle_sessions(self) -> None:
        """Close sessions idle beyond the timeout, notifying their clients."""
        interval = min(max(self.idle_timeout / 10.0, 0.05), 5.0)
        while True:
            await asyncio.sleep(interval)
            now = time.monotonic()
            async with self._registry_lock:
                expired = [s for s in self.sessions.values()
                           if now - s.last_activity > self.idle_timeout
                           and not s.policy_running]
                for sess in expired:
                    sess.stop_policy()
                    del self.sessions[sess.id]
            for sess in expired:
                await self._send(sess.connection, {
                    "proto": PROTO_VERSION,
                    "type": "session_closed",
                    "session_id": sess.id,
                    "reason": "idle_timeout",
                })

    # ------------------------------------------------------------ messaging

    async def _send(self, connection, payload: Dict[str, Any]) -> None:
        try:
            await connection.send(json.dumps(payload))
        except Exception:
            # The client went away mid-send; its sessions are reaped by the
            # connection handler, so losing this frame is harmless.
            log.debug("dropped message to closed connection", exc_info=True)

    async def _send_error(self, connection, request_id, code: str,
                          message: str) -> None:
        await self._send(connection, {
            "proto": PROTO_VERSION,
            "type": "error",
            "request_id": request_id,
            "code": code,
            "message": message,
        })

    def _state_payload(self, sess: Session, request_id=None,
                       with_frame: bool = False) -> Dict[str, Any]:
        """Build one StateMessage; bumps the session tick."""
        env = sess.env
        scene = env.scene
        objects = []
        for obj in scene.objects:
            entry = _pose_json(obj.pose)
            entry["id"] = obj.id
            entry["shape"] = {"kind": obj.shape.kind.value,
                              "dims": list(obj.shape.dims)}
            entry["color"] = list(obj.color)
            entry["role"] = obj.role.value
            entry["out_of_bounds"] = obj.out_of_bounds
            objects.append(entry)
        payload: Dict[str, Any] = {
            "proto": PROTO_VERSION,
            "type": "state",
            "session_id": sess.id,
            "tick": sess.tick,
            "episode": env.episode,
            "scene": {
                "objects": objects,
                "q": [float(v) for v in scene.robot_state.q],
                "links": [_vec_json(p.position) for p in scene.link_poses],
                "ee": _pose_json(scene.ee_pose),
                "attached": scene.robot_state.attached_object,
            },
            "reward": sess.last_reward,
            "distance": env.current_distance(),
            "success": sess.success,
            "done": sess.done,
            "manual_intervention": scene.manual_intervention,
        }
        if request_id is not None:
            payload["request_id"] = request_id
        if with_frame:
            now = time.monotonic()
            if now - sess.last_frame_at < MIN_FRAME_INTERVAL:
                payload["frame_skipped"] = True
            else:
                sess.last_frame_at = now
                payload["frame"] = self._frame_payload(env)
        sess.tick += 1
        return payload

    @staticmethod
    def _frame_payload(env: Environment) -> Dict[str, Any]:
        if not env.config.cameras:
            raise CommandError("bad_request",
                               "this session's config has no cameras")
        cam = env.config.cameras[0]
        image = env.render_images()[cam.name]
        h, w = image.rgb.shape[:2]
        ppm = b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(
            image.rgb).tobytes()
        return {
            "camera": cam.name,
            "width": w,
            "height": h,
            "format": "ppm",
            "data": base64.b64encode(ppm).decode("ascii"),
        }

    # ----------------------------------------------------------- dispatch

    async def _handle_raw(self, connection, raw) -> None:
        request_id = None
        try:
            try:
                msg = json.loads(raw)
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise CommandError("malformed", f"message is not JSON: {exc}")
            if not isinstance(msg, dict):
                raise CommandError("malformed", "message must be a JSON object")
            request_id = msg.get("request_id")
            if msg.get("proto") != PROTO_VERSION:
                raise CommandError(
                    "bad_proto",
                    f"unsupported protocol {msg.get('proto')!r}; "
                    f"this server speaks proto {PROTO_VERSION}")
            if request_id is None or not isinstance(request_id, (str, int)):
                raise CommandError("malformed",
                                   "a string or integer request_id is required")
            kind = msg.get("type")
            if kind not in COMMANDS:
                raise CommandError(
                    "malformed",
                    f"unknown command {kind!r}; known: {', '.join(COMMANDS)}")
            await self._dispatch(connection, msg)
        except CommandError as exc:
            await self._send_error(connection, request_id, exc.code, str(exc))
        except (ConfigurationError, ProtocolError) as exc:
            await self._send_error(connection, request_id, "config_error",
                                   str(exc))
        except ManipSimError as exc:
            await self._send_error(connection, request_id, "runtime_error",
                                   str(exc))
        except asyncio.CancelledError:
            raise
        except Exception as exc:  # unexpected; keep the connection alive
            log.exception("command failed")
            await self._send_error(connection, request_id, "runtime_error",
                                   f"{type(exc).__name__}: {exc}")

    async def _dispatch(self, connection, msg: Dict[str, Any]) -> None:
        kind = msg["type"]
        request_id = msg["request_id"]
        if kind == "create_session":
            await self._cmd_create(connection, msg)
            return
        session_id = msg.get("session_id")
        async with self._registry_lock:
            sess = self.sessions.get(session_id) if isinstance(
                session_id, str) else None
        if sess is None:
            raise CommandError("unknown_session",
                               f"unknown session {session_id!r}")
        sess.touch()
        handler = {
            "reset": self._cmd_reset,
            "step": self._cmd_step,
            "set_object_pose": self._cmd_set_object_pose,
            "set_joint": self._cmd_set_joint,
            "run_policy": self._cmd_run_policy,
            "pause": self._cmd_pause,
            "get_state": self._cmd_get_state,
            "close": self._cmd_close,
        }[kind]
        await handler(connection, sess, msg, request_id)

    def _reply(self, sess_id: Optional[str], request_id,
               op: str, **extra) -> Dict[str, Any]:
        payload = {"proto": PROTO_VERSION, "type": "reply",
                   "request_id": request_id, "op": op}
        if sess_id is not None:
            payload["session_id"] = sess_id
        payload.update(extra)
        return payload

    # ----------------------------------------------------------- commands

    async def _cmd_create(self, connection, msg: Dict[str, Any]) -> None:
        request_id = msg["request_id"]
        if "config" in msg:
            config = _require(msg, "config", dict, "a configuration object")
        elif self.default_config is not None:
            config = self.default_config
        else:
            raise CommandError("bad_request",
                               "create_session needs a 'config' field "
                               "(this server has no default configuration)")
        episode = _opt_episode(msg)
        try:
            env = make_env(config)
            first_obs = env.reset(episode)
        except ManipSimError as exc:
            raise CommandError("config_error", str(exc)) from None
        async with self._registry_lock:
            if len(self.sessions) >= self.max_sessions:
                raise CommandError(
                    "capacity",
                    f"server is at its limit of {self.max_sessions} sessions")
            sess = Session(id=str(uuid.uuid4()), env=env, connection=connection)
            sess.last_obs = first_obs
            self.sessions[sess.id] = sess
        async with sess.lock:
            await self._send(connection,
                             self._reply(sess.id, request_id, "create_session",
                                         session_id=sess.id,
                                         metadata=_session_metadata(env)))
            await self._send(connection, self._state_payload(sess))

    async def _cmd_reset(self, connection, sess: Session,
                         msg: Dict[str, Any], request_id) -> None:
        sess.stop_policy()
        episode = _opt_episode(msg)
        async with sess.lock:
            sess.last_obs = sess.env.reset(episode)
            sess.last_reward = None
            sess.success = False
            sess.done = False
            await self._send(connection, self._reply(sess.id, request_id,
                                                     "reset",
                                                     episode=sess.env.episode))
            await self._send(connection, self._state_payload(sess))

    async def _cmd_step(self, connection, sess: Session,
                        msg: Dict[str, Any], request_id) -> None:
        if sess.policy_running:
            raise CommandError("policy_running",
                               "step is rejected while run_policy is active; "
                               "pause first")
        action = _require(msg, "action", list, "a list of numbers")
        if not all(isinstance(c, (int, float)) and not isinstance(c, bool)
                   for c in action):
            raise CommandError("bad_request", "'action' must be numbers")
        async with sess.lock:
            self._apply_step(sess, np.asarray(action, dtype=np.float64))
            await self._send(connection,
                             self._reply(sess.id, request_id, "step"))
            await self._send(connection, self._state_payload(sess))

    def _apply_step(self, sess: Session, action: np.ndarray) -> None:
        try:
            result = sess.env.step(action)
        except AgentError as exc:
            raise CommandError("bad_request", str(exc)) from None
        sess.last_obs = result.observation
        sess.last_reward = result.reward
        sess.success = bool(result.info.get("success", False))
        sess.done = result.done

    async def _cmd_set_object_pose(self, connection, sess: Session,
                                   msg: Dict[str, Any], request_id) -> None:
        object_id = _require(msg, "id", str, "an object id string")
        position = _parse_vec3(_require(msg, "position", (list, tuple),
                                        "[x, y, z]"), "position")
        orientation = None
        if msg.get("orientation") is not None:
            orientation = _parse_quat(msg["orientation"])
        async with sess.lock:
            try:
                sess.env.teleport_object(object_id, position, orientation)
            except ConfigurationError as exc:
                raise CommandError("bad_request", str(exc)) from None
            sess.last_obs = sess.env.observe()
            await self._send(connection, self._reply(sess.id, request_id,
                                                     "set_object_pose"))
            await self._send(connection, self._state_payload(sess))

    async def _cmd_set_joint(self, connection, sess: Session,
                             msg: Dict[str, Any], request_id) -> None:
        index = _require(msg, "index", int, "an integer joint index")
        if isinstance(index, bool):
            raise CommandError("bad_request", "'index' must be an integer")
        value = _require(msg, "value", (int, float), "a number")
        if isinstance(value, bool):
            raise CommandError("bad_request", "'value' must be a number")
        async with sess.lock:
            try:
                applied = sess.env.set_joint_value(index, float(value))
            except ConfigurationError as exc:
                raise CommandError("bad_request", str(exc)) from None
            sess.last_obs = sess.env.observe()
            await self._send(connection, self._reply(sess.id, request_id,
                                                     "set_joint",
                                                     index=index,
                                                     value=applied))
            await self._send(connection, self._state_payload(sess))

    async def _cmd_run_policy(self, connection, sess: Session,
                              msg: Dict[str, Any], request_id) -> None:
        if sess.policy_running:
            raise CommandError("policy_running",
                               "a policy is already running; pause first")
        name = _require(msg, "agent", str, "one of " + ", ".join(POLICY_AGENTS))
        if name not in POLICY_AGENTS:
            raise CommandError(
                "bad_request",
                f"unknown agent {name!r}; known: {', '.join(POLICY_AGENTS)}")
        hz = _require(msg, "hz", int, "an integer")
        if isinstance(hz, bool) or not 1 <= hz <= MAX_POLICY_HZ:
            raise CommandError("bad_request",
                               f"hz must be an integer in 1..{MAX_POLICY_HZ}")
        if sess.done:
            raise CommandError("bad_request",
                               "episode is done; reset before run_policy")
        policy_path = msg.get("policy_path", self.policy_path)
        try:
            agent = make_agent(name, policy_path=policy_path)
        except ManipSimError as exc:
            raise CommandError("bad_request", str(exc)) from None
        env = sess.env
        agent.reset(env, stream(env.config.seed, env.episode, "agent"))
        if hasattr(agent, "verify_layout"):
            try:
                agent.verify_layout(env)
            except ConfigurationError as exc:
                raise CommandError("bad_request", str(exc)) from None
        await self._send(connection, self._reply(sess.id, request_id,
                                                 "run_policy",
                                                 agent=name, hz=hz))
        sess.policy_task = asyncio.create_task(
            self._policy_loop(connection, sess, agent, hz))

    async def _policy_loop(self, connection, sess: Session,
                           agent: Agent, hz: int) -> None:
        interval = 1.0 / hz
        start = time.monotonic()
        steps = 0
        try:
            while not sess.done:
                target = start + steps * interval
                delay = target - time.monotonic()
                if delay > 0:
                    await asyncio.sleep(delay)
                async with sess.lock:
                    if sess.done:
                        break
                    action = agent.act(sess.env, sess.last_obs)
                    self._apply_step(sess, action)
                    sess.touch()
                    await self._send(connection, self._state_payload(sess))
                steps += 1
        except asyncio.CancelledError:
            raise
        except Exception as exc:
            log.exception("policy loop failed")
            await self._send(connection, {
                "proto": PROTO_VERSION,
                "type": "error",
                "request_id": None,
                "session_id": sess.id,
                "code": "runtime_error",
                "message": f"policy loop stopped: {exc}",
            })

    async def _cmd_pause(self, connection, sess: Session,
                         msg: Dict[str, Any], request_id) -> None:
        was_running = sess.policy_running
        sess.stop_policy()
        # Take the lock so the reply orders after any in-flight policy step.
        async with sess.lock:
            await self._send(connection, self._reply(sess.id, request_id,
                                                     "pause",
                                                     was_running=was_running))

    async def _cmd_get_state(self, connection, sess: Session,
                             msg: Dict[str, Any], request_id) -> None:
        with_frame = bool(msg.get("with_frame", False))
        async with sess.lock:
            await self._send(connection,
                             self._state_payload(sess, request_id=request_id,
                                                 with_frame=with_frame))

    async def _cmd_close(self, connection, sess: Session,
                         msg: Dict[str, Any], request_id) -> None:
        sess.stop_policy()
        async with self._registry_lock:
            self.sessions.pop(sess.id, None)
        await self._send(connection, self._reply(sess.id, request_id, "close",
                                                 closed=True))

    # ----------------------------------------------------------- static UI

    def process_request(self, connection, request):
        """Serve the bundled test UI for plain HTTP requests.

        WebSocket upgrades pass through (return None); anything else is
        answered from ui_dir, or 404/426 when no UI directory is configured.
        """
        upgrade = request.headers.get("Upgrade", "")
        if upgrade.lower() == "websocket":
            return None
        if self.ui_dir is None:
            return connection.respond(426, "WebSocket endpoint only\n")
        path = urllib.parse.urlsplit(request.path).path
        rel = urllib.parse.unquote(path).lstrip("/") or "index.html"
        target = (self.ui_dir / rel).resolve()
        if self.ui_dir not in target.parents and target != self.ui_dir:
            return connection.respond(404, "not found\n")
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            return connection.respond(404, "not found\n")
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        body = target.read_bytes()
        headers = Headers([("Content-Type", ctype),
                           ("Content-Length", str(len(body)))])
        return Response(200, "OK", headers, body)


def parse_bind(bind: str) -> Tuple[str, int]:
    """Split a HOST:PORT string, tolerating bracketed IPv6 hosts."""
    host, sep, port = bind.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigurationError(
            f"bind address {bind!r} is not HOST:PORT")
    host = host.strip("[]") or "127.0.0.1"
    return host, int(port)


async def serve_sessions(host: str, port: int,
                         max_sessions: int = DEFAULT_MAX_SESSIONS,
                         idle_timeout: float = DEFAULT_IDLE_TIMEOUT,
                         ui_dir: Optional[str] = None,
                         policy_path: Optional[str] = None,
                         default_config: Optional[Dict[str, Any]] = None,
                         ready: Optional[asyncio.Event] = None) -> None:
    """Run the session service until cancelled."""
    server = SessionServer(max_sessions=max_sessions,
                           idle_timeout=idle_timeout,
                           ui_dir=ui_dir,
                           policy_path=policy_path,
                           default_config=default_config)
    async with ws_serve(server.handle_connection, host, port,
                        process_request=server.process_request,
                        max_size=16 * 1024 * 1024):
        log.info("session service listening on ws://%s:%d", host, port)
        if ready is not None:
            ready.set()
        reaper = asyncio.create_task(server.reap_idle_sessions())
        try:
            await asyncio.Future()
        finally:
            reaper.cancel()


def run_server(bind: str, max_sessions: int = DEFAULT_MAX_SESSIONS,
               idle_timeout: float = DEFAULT_IDLE_TIMEOUT,
               ui_dir: Optional[str] = None,
               policy_path: Optional[str] = None,
               default_config: Optional[Dict[str, Any]] = None) -> None:
    """Blocking entry point used by the command line."""
    host, port = parse_bind(bind)
    try:
        asyncio.run(serve_sessions(host, port, max_sessions=max_sessions,
                                   idle_timeout=idle_timeout, ui_dir=ui_dir,
                                   policy_path=policy_path,
                                   default_config=default_config))
    except KeyboardInterrupt:
        pass
