"""World state: shapes, objects, workspaces, spawning, and physics.

The stepper is deliberately simple and fully ordered so episodes replay
bit-for-bit. Each step runs fixed stages:

1. attach     an attach request welds the nearest graspable object whose
              surface lies within the gripper's grasp radius of the tool point
2. carry      the welded object follows the tool frame rigidly
3. release    dropping hands the object the tool point's velocity
4. ballistics free, unattached, non-resting objects integrate gravity
              (symplectic Euler: v += g*dt, then p += v*dt)
5. ground     objects below rest height land inelastically (velocity zeroed)
6. push       the tool sphere displaces resting objects horizontally by the
              minimal separation, capped at the tool's own displacement
7. overlap    pairwise bounding-sphere overlaps resolve horizontally,
              split evenly, in sorted pair order, a few sweeps
8. bounds     free objects outside the workspace latch out_of_bounds

Fixtures never move; goal markers neither collide nor fall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, SpawnError
from .geometry import Pose, UnitQuat, Vec3
from .robot import RobotModel, RobotState, fk_ee, fk_link_poses
from .visuals import Texture

# Physics tick in seconds; one environment step is one tick.
DT = 0.02
GRAVITY = -9.81
# The tool point acts as a sphere of this radius for pushing and rendering.
EE_RADIUS = 0.02
# Rejection-sampling budget for area placement before giving up.
SPAWN_ATTEMPTS = 1000
# Sweeps of pairwise overlap resolution per step.
OVERLAP_SWEEPS = 10
# Post-condition bound on residual pairwise overlap after the sweeps.
OVERLAP_TOL = 1e-4


class ShapeKind(str, Enum):
    SPHERE = "sphere"
    BOX = "box"
    CYLINDER = "cylinder"


@dataclass(frozen=True)
class ShapePrimitive:
    """Convex primitive. dims: sphere (r,), box (hx, hy, hz), cylinder (r, hh).

    Box dims are half-extents; cylinder hh is the half-height.
    """

    kind: ShapeKind
    dims: Tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        dims = tuple(float(d) for d in self.dims)
        expected = {ShapeKind.SPHERE: 1, ShapeKind.BOX: 3, ShapeKind.CYLINDER: 2}[self.kind]
        if len(dims) != expected:
            raise ConfigurationError(
                f"{self.kind.value} needs {expected} dims, got {len(dims)}"
            )
        if any(not (math.isfinite(d) and d > 0.0) for d in dims):
            raise ConfigurationError(f"shape dims must be positive finite, got {dims!r}")
        object.__setattr__(self, "dims", dims)

    @property
    def half_height(self) -> float:
        if self.kind is ShapeKind.SPHERE:
            return self.dims[0]
        if self.kind is ShapeKind.BOX:
            return self.dims[2]
        return self.dims[1]

    @property
    def bounding_radius(self) -> float:
        if self.kind is ShapeKind.SPHERE:
            return self.dims[0]
        if self.kind is ShapeKind.BOX:
            hx, hy, hz = self.dims
            return math.sqrt(hx * hx + hy * hy + hz * hz)
        r, hh = self.dims
        return math.sqrt(r * r + hh * hh)

    @property
    def footprint_radius(self) -> float:
        """Bounding circle radius in the XY plane."""
        if self.kind is ShapeKind.SPHERE:
            return self.dims[0]
        if self.kind is ShapeKind.BOX:
            hx, hy, _ = self.dims
            return math.sqrt(hx * hx + hy * hy)
        return self.dims[0]


class ObjectRole(str, Enum):
    FREE = "free"
    FIXTURE = "fixture"
    GOAL_MARKER = "goal_marker"


@dataclass
class SceneObject:
    """One body in the world. Mutable: the stepper updates pose/velocity."""

    id: str
    shape: ShapePrimitive
    pose: Pose
    velocity: Vec3 = field(default_factory=Vec3.zero)
    color: Tuple[float, float, float, float] = (0.7, 0.7, 0.7, 1.0)
    specular: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    texture: Optional[Texture] = None
    graspable: bool = True
    role: ObjectRole = ObjectRole.FREE
    spawn_position: Vec3 = field(default_factory=Vec3.zero)
    out_of_bounds: bool = False

    @property
    def position(self) -> Vec3:
        return self.pose.position

    def rest_height(self) -> float:
        return self.shape.half_height

    def is_resting(self) -> bool:
        """At rest on the ground: exact values set by spawn/ground stages."""
        v = self.velocity
        return (
            v.x == 0.0
            and v.y == 0.0
            and v.z == 0.0
            and self.pose.position.z == self.rest_height()
        )


@dataclass(frozen=True)
class FixedPlacement:
    """One (x, y) per instance; spawned objects rest on the ground."""

    positions: Tuple[Tuple[float, float], ...]


@dataclass(frozen=True)
class AreaPlacement:
    """Uniform sampling inside an axis-aligned box; z clamps to rest height."""

    lo: Vec3
    hi: Vec3

    def __post_init__(self) -> None:
        for a, b, name in (
            (self.lo.x, self.hi.x, "x"),
            (self.lo.y, self.hi.y, "y"),
            (self.lo.z, self.hi.z, "z"),
        ):
            if a > b:
                raise ConfigurationError(f"area placement: lo.{name} > hi.{name}")


Placement = Union[FixedPlacement, AreaPlacement]


class SpawnChoice(str, Enum):
    ALL_IN_ORDER = "all_in_order"
    RANDOM_SUBSET = "random_subset"


@dataclass(frozen=True)
class SpawnSpec:
    """How one group of objects enters the scene at reset.

    count may be an int or an inclusive (lo, hi) range sampled uniformly.
    all_in_order cycles the pool; random_subset draws without replacement
    (count must then fit in the pool).
    """

    pool: Tuple[str, ...]
    count: Union[int, Tuple[int, int]]
    placement: Placement
    choice: SpawnChoice = SpawnChoice.ALL_IN_ORDER

    def __post_init__(self) -> None:
        object.__setattr__(self, "pool", tuple(self.pool))
        object.__setattr__(self, "choice", SpawnChoice(self.choice))
        if not self.pool:
            raise ConfigurationError("spawn pool must not be empty")
        c = self.count
        if isinstance(c, int):
            if c < 1:
                raise ConfigurationError(f"spawn count must be >= 1, got {c}")
        else:
            lo, hi = int(c[0]), int(c[1])
            if not (1 <= lo <= hi):
                raise ConfigurationError(f"spawn count range must satisfy 1 <= lo <= hi, got {c!r}")
            object.__setattr__(self, "count", (lo, hi))
        if isinstance(self.placement, FixedPlacement):
            if not isinstance(self.count, int) or len(self.placement.positions) != self.count:
                raise ConfigurationError(
                    "fixed placement needs an integer count equal to the number of positions"
                )

    def max_count(self) -> int:
        return self.count if isinstance(self.count, int) else self.count[1]


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned working volume with optional fixtures and a plane lock.

    plane_lock "y" freezes object motion in y (vertical-plane tasks).
    fixtures are (catalog_name, position) pairs spawned immovable at reset.
    """

    name: str
    bounds_min: Vec3
    bounds_max: Vec3
    default_base: Pose
    plane_lock: Optional[str] = None
    fixtures: Tuple[Tuple[str, Tuple[float, float]], ...] = ()

    def __post_init__(self) -> None:
        if self.plane_lock not in (None, "y"):
            raise ConfigurationError(f"unsupported plane_lock {self.plane_lock!r}")
        for a, b, axis in (
            (self.bounds_min.x, self.bounds_max.x, "x"),
            (self.bounds_min.y, self.bounds_max.y, "y"),
            (self.bounds_min.z, self.bounds_max.z, "z"),
        ):
            if a >= b:
                raise ConfigurationError(f"workspace {self.name!r}: bounds_min.{axis} >= bounds_max.{axis}")

    def contains(self, p: Vec3) -> bool:
        return (
            self.bounds_min.x <= p.x <= self.bounds_max.x
            and self.bounds_min.y <= p.y <= self.bounds_max.y
            and self.bounds_min.z <= p.z <= self.bounds_max.z
        )


@dataclass
class Scene:
    """Complete mutable world state for one episode."""

    workspace: Workspace
    robot: RobotModel
    robot_state: RobotState
    objects: List[SceneObject] = field(default_factory=list)
    attached_rel: Optional[Pose] = None  # attached object's pose in the tool frame
    time: float = 0.0
    manual_intervention: bool = False
    link_poses: List[Pose] = field(default_factory=list)
    ee_pose: Pose = field(default_factory=Pose.identity)

    def refresh_fk(self) -> None:
        self.link_poses = fk_link_poses(self.robot, self.robot_state.q)
        self.ee_pose = self.link_poses[-1].compose(self.robot.ee_offset) if self.link_poses else fk_ee(
            self.robot, self.robot_state.q
        )

    def find_object(self, object_id: str) -> Optional[SceneObject]:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        return None

    def object_ids(self) -> List[str]:
        return [o.id for o in self.objects]


# Entity ids reserved for the robot's own renderable parts.
RESERVED_ENTITY_IDS = ("ee", "gripper")


def get_entity_position(scene: Scene, entity_id: str) -> Vec3:
    """World position of an object center, or of the tool point for "ee"."""
    if entity_id in RESERVED_ENTITY_IDS:
        return scene.ee_pose.position
    obj = scene.find_object(entity_id)
    if obj is None:
        raise ConfigurationError(f"unknown entity id {entity_id!r}")
    return obj.pose.position


def _collides_xy(pos: Vec3, footprint: float, others: Sequence[SceneObject]) -> bool:
    for other in others:
        if other.role is ObjectRole.GOAL_MARKER:
            continue
        d = math.hypot(pos.x - other.pose.position.x, pos.y - other.pose.position.y)
        if d < footprint + other.shape.footprint_radius:
            return True
    return False


def _unique_id(base: str, taken: Dict[str, int]) -> str:
    n = taken.get(base, 0)
    taken[base] = n + 1
    return base if n == 0 else f"{base}_{n}"


def _resolve_instances(spec: SpawnSpec, catalog: Dict[str, SceneObject], rng: np.random.Generator) -> List[str]:
    for name in spec.pool:
        if name not in catalog:
            raise ConfigurationError(f"unknown object catalog name {name!r}")
    if isinstance(spec.count, int):
        count = spec.count
    else:
        lo, hi = spec.count
        count = int(rng.integers(lo, hi + 1))
    if spec.choice is SpawnChoice.ALL_IN_ORDER:
        return [spec.pool[i % len(spec.pool)] for i in range(count)]
    if count > len(spec.pool):
        raise ConfigurationError(
            f"random_subset count {count} exceeds pool size {len(spec.pool)}"
        )
    idx = rng.choice(len(spec.pool), size=count, replace=False)
    return [spec.pool[int(i)] for i in idx]


def spawn_objects(
    scene: Scene,
    spec: SpawnSpec,
    catalog: Dict[str, SceneObject],
    rng: np.random.Generator,
    id_counter: Optional[Dict[str, int]] = None,
) -> List[SceneObject]:
    """Instantiate one spawn spec into the scene; returns the new objects.

    Fixed positions that overlap existing colliders raise SpawnError; area
    placement rejection-samples up to SPAWN_ATTEMPTS times per object.
    """
    if id_counter is None:
        id_counter = {}
        for obj in scene.objects:
            # rebuild the suffix counter from what's already there
            base = obj.id.rsplit("_", 1)[0] if obj.id.rsplit("_", 1)[-1].isdigit() else obj.id
            id_counter[base] = max(id_counter.get(base, 0), 1)
    names = _resolve_instances(spec, catalog, rng)
    spawned: List[SceneObject] = []
    for name in names:
        proto = catalog[name]
        half = proto.shape.half_height
        footprint = proto.shape.footprint_radius
        collide = proto.role is not ObjectRole.GOAL_MARKER
        if isinstance(spec.placement, FixedPlacement):
            x, y = spec.placement.positions[len(spawned)]
            pos = Vec3(float(x), float(y), half)
            if collide and _collides_xy(pos, footprint, scene.objects):
                raise SpawnError(
                    f"fixed placement for {name!r} at ({x}, {y}) overlaps an existing object"
                )
        else:
            lo, hi = spec.placement.lo, spec.placement.hi
            pos = None
            for _ in range(SPAWN_ATTEMPTS):
                cand = Vec3(
                    float(rng.uniform(lo.x, hi.x)),
                    float(rng.uniform(lo.y, hi.y)),
                    max(float(rng.uniform(lo.z, hi.z)), half),
                )
                if collide and _collides_xy(cand, footprint, scene.objects):
                    continue
                pos = cand
                break
            if pos is None:
                raise SpawnError(
                    f"area too crowded: no spot for {name!r} after {SPAWN_ATTEMPTS} attempts"
                )
        obj = SceneObject(
            id=_unique_id(proto.id, id_counter),
            shape=proto.shape,
            pose=Pose(pos, UnitQuat.identity()),
            velocity=Vec3.zero(),
            color=proto.color,
            specular=proto.specular,
            texture=proto.texture,
            graspable=proto.graspable,
            role=proto.role,
            spawn_position=pos,
        )
        scene.objects.append(obj)
        spawned.append(obj)
    return spawned


def _horizontal(v: Vec3, plane_lock: Optional[str]) -> Vec3:
    """Project onto the allowed horizontal directions."""
    if plane_lock == "y":
        return Vec3(v.x, 0.0, 0.0)
    return Vec3(v.x, v.y, 0.0)


def step_physics(
    scene: Scene,
    ee_before: Pose,
    ee_after: Pose,
    attach_request: bool,
    dt: float,
    grasp_radius: Optional[float],
) -> Scene:
    """Advance the world one tick. Mutates and returns the scene.

    ee_before/ee_after bracket the tool motion this step; attach_request is
    the gated gripper desire (False when no gripper is fitted).
    """
    state = scene.robot_state
    lock = scene.workspace.plane_lock
    ee_pos = ee_after.position
    ee_moved = ee_after.position - ee_before.position

    # 1. attach: nearest graspable surface within reach wins; first in scene
    # order breaks exact ties
    if attach_request and state.attached_object is None and grasp_radius is not None:
        best: Optional[SceneObject] = None
        best_d = math.inf
        for obj in scene.objects:
            if obj.role is not ObjectRole.FREE or not obj.graspable:
                continue
            surf = obj.pose.position.distance_to(ee_pos) - obj.shape.bounding_radius
            if surf <= grasp_radius and surf < best_d:
                best, best_d = obj, surf
        if best is not None:
            state.attached_object = best.id
            scene.attached_rel = ee_after.inverse().compose(best.pose)
            best.velocity = Vec3.zero()

    # 2. carry
    attached = scene.find_object(state.attached_object) if state.attached_object else None
    if attached is not None and scene.attached_rel is not None:
        attached.pose = ee_after.compose(scene.attached_rel)

    # 3. release: object leaves with the tool's velocity
    if not attach_request and attached is not None:
        attached.velocity = ee_moved.scale(1.0 / dt)
        state.attached_object = None
        scene.attached_rel = None
        attached = None

    # 4-5. ballistics + ground
    for obj in scene.objects:
        if obj.role is not ObjectRole.FREE or obj is attached:
            continue
        if obj.is_resting():
            continue
        v = obj.velocity
        if lock == "y":
            v = Vec3(v.x, 0.0, v.z)
        v = Vec3(v.x, v.y, v.z + GRAVITY * dt)
        p = obj.pose.position
        p = Vec3(p.x + v.x * dt, p.y + v.y * dt, p.z + v.z * dt)
        if p.z < obj.rest_height():
            p = Vec3(p.x, p.y, obj.rest_height())
            v = Vec3.zero()
        obj.pose = Pose(p, obj.pose.orientation)
        obj.velocity = v

    # 6. push: tool sphere displaces resting objects by the minimal horizontal
    # separation, never farther than the tool itself moved this step
    ee_step = ee_moved.norm()
    if ee_step > 0.0:
        for obj in scene.objects:
            if obj.role is not ObjectRole.FREE or obj is attached or not obj.is_resting():
                continue
            c = obj.pose.position
            reach = EE_RADIUS + obj.shape.bounding_radius
            dz = c.z - ee_pos.z
            if abs(dz) >= reach:
                continue
            dxy = _horizontal(c - ee_pos, lock)
            dist_xy = dxy.norm()
            if math.hypot(dist_xy, dz) >= reach:
                continue
            if dist_xy < 1e-9:
                continue  # tool dead-centered; no defined push direction
            need = math.sqrt(reach * reach - dz * dz) - dist_xy
            if need <= 0.0:
                continue
            t = min(need, ee_step)
            direction = dxy.scale(1.0 / dist_xy)
            c = Vec3(c.x + direction.x * t, c.y + direction.y * t, c.z)
            obj.pose = Pose(c, obj.pose.orientation)

    # 7. pairwise overlap: bounding spheres, horizontal split, fixed order
    colliders = [
        o
        for o in scene.objects
        if o.role is not ObjectRole.GOAL_MARKER and o is not attached
    ]
    for _ in range(OVERLAP_SWEEPS):
        any_moved = False
        for i in range(len(colliders)):
            for j in range(i + 1, len(colliders)):
                a, b = colliders[i], colliders[j]
                if a.role is ObjectRole.FIXTURE and b.role is ObjectRole.FIXTURE:
                    continue
                pa, pb = a.pose.position, b.pose.position
                reach = a.shape.bounding_radius + b.shape.bounding_radius
                if pa.distance_to(pb) >= reach:
                    continue
                # minimal horizontal move restoring 3D separation
                dz = pb.z - pa.z
                dxy = _horizontal(pb - pa, lock)
                dist_xy = dxy.norm()
                gap = math.sqrt(max(reach * reach - dz * dz, 0.0)) - dist_xy
                if gap <= 0.0:
                    continue
                direction = dxy.scale(1.0 / dist_xy) if dist_xy >= 1e-9 else Vec3(1.0, 0.0, 0.0)
                if a.role is ObjectRole.FIXTURE:
                    moves = ((b, direction.scale(gap)),)
                elif b.role is ObjectRole.FIXTURE:
                    moves = ((a, direction.scale(-gap)),)
                else:
                    moves = (
                        (a, direction.scale(-gap / 2.0)),
                        (b, direction.scale(gap / 2.0)),
                    )
                for obj, delta in moves:
                    p = obj.pose.position
                    obj.pose = Pose(Vec3(p.x + delta.x, p.y + delta.y, p.z), obj.pose.orientation)
                any_moved = True
        if not any_moved:
            break

    # 8. bounds latch
    for obj in scene.objects:
        if obj.role is ObjectRole.FREE and not obj.out_of_bounds:
            if not scene.workspace.contains(obj.pose.position):
                obj.out_of_bounds = True

    scene.time += dt
    return scene
