"""Domain randomization: scene appearance, camera pose, and initial joints.

Six kinds, each drawing from its own named stream so enabling one never
shifts another's draws:

  light        jitter light direction, intensity, and tint
  camera       jitter camera eye position, re-aimed at the same target
  texture      assign procedural textures to free objects
  color        jitter object base colors
  joints       perturb the reset arm configuration within limits
  postprocess  integer-exact pixel noise/brightness/contrast/blur

All kinds except joints are visual-only: they never touch object poses,
velocities, or the arm, so trajectories with and without them enabled match
bitwise. joints is the one dynamics-affecting kind and is restricted to the
on_reset schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigurationError
from .geometry import Vec3
from .scene import ObjectRole, Scene
from .seeding import RandomStreams
from .visuals import LightingState, Texture, TextureKind

KINDS = ("light", "camera", "texture", "color", "joints", "postprocess")
SCHEDULES = ("on_reset", "every_step")

_DEFAULTS: dict[str, dict] = {
    "light": {"direction_jitter": 0.3, "intensity_range": (0.8, 1.2),
              "color_jitter": 0.1},
    "camera": {"position_jitter": 0.05},
    "texture": {"kinds": ("checker", "noise"), "scale_range": (2.0, 8.0)},
    "color": {"jitter": 0.1},
    "joints": {"jitter": 0.1},
    "postprocess": {"noise_std": 2.0, "brightness": (-8, 8),
                    "contrast": (0.9, 1.1), "blur_prob": 0.25},
}


def _pair(params, key, kind, lo_ok=None):
    v = params[key]
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or not all(isinstance(x, (int, float)) for x in v) or v[0] > v[1]):
        raise ConfigurationError(
            f"randomization {kind!r}: {key} must be a [lo, hi] pair, got {v!r}")
    return float(v[0]), float(v[1])


@dataclass(frozen=True)
class KindSpec:
    """One randomization kind: when it fires and its parameters."""

    kind: str
    schedule: str = "on_reset"
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(
                f"unknown randomization kind {self.kind!r}; known: {', '.join(KINDS)}")
        if self.schedule not in SCHEDULES:
            raise ConfigurationError(
                f"randomization {self.kind!r}: schedule must be one of {SCHEDULES}")
        if self.kind == "joints" and self.schedule != "on_reset":
            raise ConfigurationError(
                "joints randomization only supports the on_reset schedule")
        merged = dict(_DEFAULTS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ConfigurationError(
                f"randomization {self.kind!r}: unknown parameters {sorted(unknown)}")
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        self._validate(merged)

    def _validate(self, p):
        k = self.kind
        if k == "light":
            if not 0.0 <= float(p["direction_jitter"]) <= 1.0:
                raise ConfigurationError("light direction_jitter must lie in [0, 1]")
            _pair(p, "intensity_range", k)
            if not 0.0 <= float(p["color_jitter"]) <= 1.0:
                raise ConfigurationError("light color_jitter must lie in [0, 1]")
        elif k == "camera":
            if float(p["position_jitter"]) < 0.0:
                raise ConfigurationError("camera position_jitter must be >= 0")
        elif k == "texture":
            for t in p["kinds"]:
                if TextureKind(t) is TextureKind.IMAGE:
                    raise ConfigurationError(
                        "texture randomization draws procedural kinds only")
            _pair(p, "scale_range", k)
        elif k == "color":
            if not 0.0 <= float(p["jitter"]) <= 1.0:
                raise ConfigurationError("color jitter must lie in [0, 1]")
        elif k == "joints":
            if float(p["jitter"]) < 0.0:
                raise ConfigurationError("joints jitter must be >= 0")
        elif k == "postprocess":
            if float(p["noise_std"]) < 0.0:
                raise ConfigurationError("postprocess noise_std must be >= 0")
            _pair(p, "brightness", k)
            _pair(p, "contrast", k)
            if not 0.0 <= float(p["blur_prob"]) <= 1.0:
                raise ConfigurationError("postprocess blur_prob must lie in [0, 1]")


@dataclass(frozen=True)
class RandomizationSpec:
    """The set of enabled kinds. Empty spec is a no-op randomizer."""

    kinds: tuple[KindSpec, ...] = ()

    def __post_init__(self):
        names = [k.kind for k in self.kinds]
        if len(names) != len(set(names)):
            raise ConfigurationError("randomization kinds must be unique")

    @staticmethod
    def from_config(raw: Mapping[str, object]) -> "RandomizationSpec":
        """Parse the config mapping {kind: {schedule?, ...params}}."""
        if not isinstance(raw, Mapping):
            raise ConfigurationError("randomization must be an object of kinds")
        kinds = []
        for name, body in raw.items():
            if body is None:
                body = {}
            if not isinstance(body, Mapping):
                raise ConfigurationError(
                    f"randomization {name!r}: expected an object of parameters")
            body = dict(body)
            schedule = body.pop("schedule", "on_reset")
            kinds.append(KindSpec(kind=name, schedule=schedule, params=body))
        return RandomizationSpec(kinds=tuple(kinds))

    def get(self, kind: str) -> Optional[KindSpec]:
        for k in self.kinds:
            if k.kind == kind:
                return k
        return None

    def affects_visuals(self) -> bool:
        return any(k.kind != "joints" for k in self.kinds)


class Randomizer:
    """Applies a RandomizationSpec to a scene using per-kind streams."""

    def __init__(self, spec: RandomizationSpec):
        self.spec = spec

    def _active(self, phase: str):
        for k in self.spec.kinds:
            if phase == "on_reset" or k.schedule == "every_step":
                yield k

    def apply_reset(self, scene: Scene, cameras, lighting, streams: RandomStreams):
        """All enabled kinds fire at reset. Returns (cameras, lighting)."""
        return self._apply(scene, cameras, lighting, streams, "on_reset")

    def apply_step(self, scene: Scene, cameras, lighting, streams: RandomStreams):
        """Only every_step kinds fire during an episode."""
        return self._apply(scene, cameras, lighting, streams, "every_step")

    def _apply(self, scene, cameras, lighting, streams, phase):
        for k in self._active(phase):
            if k.kind == "light":
                lighting = self._light(k.params, lighting, streams.get("light"))
            elif k.kind == "camera":
                cameras = [self._camera(k.params, c, streams.get("camera"))
                           for c in cameras]
            elif k.kind == "texture":
                self._textures(k.params, scene, streams.get("texture"))
            elif k.kind == "color":
                self._colors(k.params, scene, streams.get("color"))
            elif k.kind == "joints":
                self._joints(k.params, scene, streams.get("joints"))
        return cameras, lighting

    @staticmethod
    def _light(p, base: LightingState, rng) -> LightingState:
        j = float(p["direction_jitter"])
        d = base.direction
        dx, dy, dz = rng.uniform(-j, j, size=3)
        lo, hi = p["intensity_range"]
        gain = rng.uniform(lo, hi)
        cj = float(p["color_jitter"])
        tint = 1.0 - rng.uniform(0.0, cj, size=3)
        return LightingState(
            direction=Vec3(d.x + dx, d.y + dy, d.z + dz),
            color=tuple(float(min(1.0, c * t)) for c, t in zip(base.color, tint)),
            ambient=float(np.clip(base.ambient * gain, 0.0, 2.0)),
            diffuse=float(np.clip(base.diffuse * gain, 0.0, 2.0)),
            specular=base.specular,
        )

    @staticmethod
    def _camera(p, cam, rng):
        j = float(p["position_jitter"])
        dx, dy, dz = rng.uniform(-j, j, size=3)
        b = cam.position
        return cam.moved_to(Vec3(b.x + dx, b.y + dy, b.z + dz))

    @staticmethod
    def _textures(p, scene: Scene, rng):
        kinds = [TextureKind(t) for t in p["kinds"]]
        lo, hi = p["scale_range"]
        for obj in scene.objects:
            if obj.role is not ObjectRole.FREE:
                continue
            kind = kinds[int(rng.integers(0, len(kinds)))]
            scale = float(rng.uniform(lo, hi))
            seed = int(rng.integers(0, 2**63, dtype=np.int64))
            base = obj.color[:3]
            bright = tuple(float(np.clip(c * 1.25 + 0.1, 0.0, 1.0)) for c in base)
            dark = tuple(float(np.clip(c * 0.45, 0.0, 1.0)) for c in base)
            obj.texture = Texture(kind=kind, scale=scale,
                                  colors=(bright, dark), seed=seed)

    @staticmethod
    def _colors(p, scene: Scene, rng):
        j = float(p["jitter"])
        for obj in scene.objects:
            if obj.role is not ObjectRole.FREE:
                continue
            delta = rng.uniform(-j, j, size=3)
            r, g, b = (float(np.clip(c + d, 0.0, 1.0))
                       for c, d in zip(obj.color[:3], delta))
            obj.color = (r, g, b, obj.color[3])

    @staticmethod
    def _joints(p, scene: Scene, rng):
        j = float(p["jitter"])
        lo, hi = scene.robot.joint_limits()
        q = scene.robot_state.q
        delta = rng.uniform(-j, j, size=q.shape[0])
        scene.robot_state.q = np.clip(q + delta, lo, hi)
        scene.refresh_fk()

    def postprocess(self, rgb: np.ndarray, streams: RandomStreams) -> np.ndarray:
        """Apply enabled pixel postprocessing; returns a new array."""
        k = self.spec.get("postprocess")
        if k is None:
            return rgb
        return apply_postprocess(rgb, k.params, streams.get("postprocess"))


def apply_postprocess(rgb: np.ndarray, params: Mapping[str, object],
                      rng: np.random.Generator) -> np.ndarray:
    """Integer-exact pixel pipeline: contrast, brightness, noise, blur.

    Every stage works in int32 with explicit rounding so results are
    bit-reproducible across platforms.
    """
    out = rgb.astype(np.int32)
    lo, hi = params["contrast"]
    c = rng.uniform(float(lo), float(hi))
    out = np.floor((out - 128) * c + 128.0 + 0.5).astype(np.int32)
    blo, bhi = params["brightness"]
    out = out + int(rng.integers(int(blo), int(bhi) + 1))
    std = float(params["noise_std"])
    if std > 0.0:
        noise = np.floor(rng.normal(0.0, std, size=rgb.shape) + 0.5).astype(np.int32)
        out = out + noise
    out = np.clip(out, 0, 255)
    if rng.uniform() < float(params["blur_prob"]):
        out = _box_blur3(out)
    return out.astype(np.uint8)


def _box_blur3(img: np.ndarray) -> np.ndarray:
    """3x3 integer box blur with clamped edges (sum // 9)."""
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge").astype(np.int64)
    acc = np.zeros_like(img, dtype=np.int64)
    for dy in range(3):
        for dx in range(3):
            acc += padded[dy:dy + img.shape[0], dx:dx + img.shape[1]]
    return (acc // 9).astype(np.int32)
