"""Pose math and distance metrics.

Conventions used across the package:

* right-handed world frame, +z up, meters and radians
* quaternions are scalar-first (w, x, y, z), unit-norm, with w >= 0 so each
  rotation has exactly one stored representation
* a Pose maps points from its local frame into its parent frame
* cameras look along their local -z axis with +y up in the image

All types are immutable; operations return new values. Components are checked
finite at construction time so NaN/Inf can never propagate silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError

# Unit quaternion norm must stay within this of 1 after normalization.
QUAT_NORM_TOL = 1e-9
# Vectors shorter than this cannot be normalized meaningfully.
_DEGENERATE_NORM = 1e-12
# Points with camera-frame z >= -_BEHIND_CAMERA_Z are not projectable.
_BEHIND_CAMERA_Z = -1e-6


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ConfigurationError(f"{name} has non-finite component {v!r}")


@dataclass(frozen=True, slots=True)
class Vec3:
    """Immutable 3-vector."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "z", float(self.z))
        _require_finite("Vec3", self.x, self.y, self.z)

    @staticmethod
    def zero() -> "Vec3":
        return Vec3(0.0, 0.0, 0.0)

    @staticmethod
    def from_seq(seq: Iterable[float]) -> "Vec3":
        vals = [float(v) for v in seq]
        if len(vals) != 3:
            raise ConfigurationError(f"expected 3 components, got {len(vals)}")
        return Vec3(*vals)

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def scale(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n < _DEGENERATE_NORM:
            raise ConfigurationError("cannot normalize a near-zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def distance_to(self, other: "Vec3") -> float:
        return (self - other).norm()

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)


@dataclass(frozen=True, slots=True)
class UnitQuat:
    """Unit quaternion, scalar first, canonicalized to w >= 0.

    Construction normalizes the components; a near-zero input raises. The
    stored norm is within QUAT_NORM_TOL of 1.
    """

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        w, x, y, z = (float(self.w), float(self.x), float(self.y), float(self.z))
        _require_finite("UnitQuat", w, x, y, z)
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if n < _DEGENERATE_NORM:
            raise ConfigurationError("cannot normalize a near-zero quaternion")
        w, x, y, z = w / n, x / n, y / n, z / n
        if w < 0.0:
            w, x, y, z = -w, -x, -y, -z
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @staticmethod
    def identity() -> "UnitQuat":
        return UnitQuat(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis: Vec3, angle: float) -> "UnitQuat":
        if not math.isfinite(angle):
            raise ConfigurationError(f"angle must be finite, got {angle!r}")
        u = axis.normalized()
        h = 0.5 * angle
        s = math.sin(h)
        return UnitQuat(math.cos(h), u.x * s, u.y * s, u.z * s)

    def multiply(self, other: "UnitQuat") -> "UnitQuat":
        """Hamilton product self * other (apply other first, then self)."""
        a, b = self, other
        return UnitQuat(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )

    def conjugate(self) -> "UnitQuat":
        return UnitQuat(self.w, -self.x, -self.y, -self.z)

    inverse = conjugate  # unit quaternion: inverse == conjugate

    def rotate(self, v: Vec3) -> Vec3:
        # v' = v + w * t + u x t with t = 2 (u x v); cheaper than the sandwich
        u = Vec3(self.x, self.y, self.z)
        t = u.cross(v).scale(2.0)
        return v + t.scale(self.w) + u.cross(t)

    def to_matrix(self) -> np.ndarray:
        """3x3 rotation matrix with columns = rotated basis vectors."""
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ],
            dtype=np.float64,
        )

    @staticmethod
    def from_matrix(m: np.ndarray) -> "UnitQuat":
        """Rotation matrix -> quaternion (Shepperd's method)."""
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (3, 3):
            raise ConfigurationError(f"rotation matrix must be 3x3, got {m.shape}")
        t = m[0, 0] + m[1, 1] + m[2, 2]
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            return UnitQuat(
                0.25 * s,
                (m[2, 1] - m[1, 2]) / s,
                (m[0, 2] - m[2, 0]) / s,
                (m[1, 0] - m[0, 1]) / s,
            )
        if m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            return UnitQuat(
                (m[2, 1] - m[1, 2]) / s,
                0.25 * s,
                (m[0, 1] + m[1, 0]) / s,
                (m[0, 2] + m[2, 0]) / s,
            )
        if m[1, 1] >= m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            return UnitQuat(
                (m[0, 2] - m[2, 0]) / s,
                (m[0, 1] + m[1, 0]) / s,
                0.25 * s,
                (m[1, 2] + m[2, 1]) / s,
            )
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        return UnitQuat(
            (m[1, 0] - m[0, 1]) / s,
            (m[0, 2] + m[2, 0]) / s,
            (m[1, 2] + m[2, 1]) / s,
            0.25 * s,
        )


def rotation_aligning(from_vec: Vec3, to_vec: Vec3) -> UnitQuat:
    """Smallest rotation taking from_vec's direction to to_vec's direction.

    Antiparallel inputs rotate pi around a deterministic orthogonal axis.
    """
    a = from_vec.normalized()
    b = to_vec.normalized()
    d = a.dot(b)
    if d > 1.0 - 1e-12:
        return UnitQuat.identity()
    if d < -1.0 + 1e-12:
        # pick the coordinate axis least aligned with a
        helper = Vec3(1.0, 0.0, 0.0) if abs(a.x) <= abs(a.z) else Vec3(0.0, 0.0, 1.0)
        axis = a.cross(helper).normalized()
        return UnitQuat.from_axis_angle(axis, math.pi)
    axis = a.cross(b).normalized()
    return UnitQuat.from_axis_angle(axis, math.acos(max(-1.0, min(1.0, d))))


@dataclass(frozen=True, slots=True)
class Pose:
    """Rigid transform: position + orientation, local frame -> parent frame."""

    position: Vec3
    orientation: UnitQuat

    @staticmethod
    def identity() -> "Pose":
        return Pose(Vec3.zero(), UnitQuat.identity())

    @staticmethod
    def from_position(p: Vec3) -> "Pose":
        return Pose(p, UnitQuat.identity())

    def compose(self, child: "Pose") -> "Pose":
        """self o child: child expressed in self's parent frame."""
        return Pose(
            self.position + self.orientation.rotate(child.position),
            self.orientation.multiply(child.orientation),
        )

    def inverse(self) -> "Pose":
        qi = self.orientation.conjugate()
        return Pose(-qi.rotate(self.position), qi)

    def transform(self, point: Vec3) -> Vec3:
        """Map a point from the local frame to the parent frame."""
        return self.position + self.orientation.rotate(point)


def pose_compose(parent: Pose, child: Pose) -> Pose:
    return parent.compose(child)


def pose_inverse(pose: Pose) -> Pose:
    return pose.inverse()


def transform_point(pose: Pose, point: Vec3) -> Vec3:
    return pose.transform(point)


class MetricKind(str, Enum):
    EUCLIDEAN = "euclidean"
    MANHATTAN = "manhattan"
    MAHALANOBIS = "mahalanobis"


@dataclass(frozen=True)
class DistanceMetric:
    """Distance over same-length real vectors.

    mahalanobis_diag holds per-dimension positive variances; required for the
    mahalanobis kind, forbidden otherwise. An all-ones diagonal reproduces the
    euclidean metric exactly.
    """

    kind: MetricKind
    mahalanobis_diag: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        kind = MetricKind(self.kind)
        object.__setattr__(self, "kind", kind)
        diag = self.mahalanobis_diag
        if kind is MetricKind.MAHALANOBIS:
            if diag is None or len(diag) == 0:
                raise ConfigurationError("mahalanobis metric requires mahalanobis_diag")
            diag = tuple(float(v) for v in diag)
            for v in diag:
                if not (math.isfinite(v) and v > 0.0):
                    raise ConfigurationError(
                        f"mahalanobis_diag entries must be positive finite, got {v!r}"
                    )
            object.__setattr__(self, "mahalanobis_diag", diag)
        elif diag is not None:
            raise ConfigurationError(
                f"mahalanobis_diag is only valid for the mahalanobis kind, not {kind.value}"
            )


def compute_distance(a: Sequence[float], b: Sequence[float], metric: DistanceMetric) -> float:
    """Distance between two same-length vectors under the given metric."""
    va = np.asarray(a, dtype=np.float64).reshape(-1)
    vb = np.asarray(b, dtype=np.float64).reshape(-1)
    if va.shape != vb.shape:
        raise ConfigurationError(
            f"distance operands must match in length, got {va.shape[0]} and {vb.shape[0]}"
        )
    if not (np.all(np.isfinite(va)) and np.all(np.isfinite(vb))):
        raise ConfigurationError("distance operands must be finite")
    d = va - vb
    if metric.kind is MetricKind.EUCLIDEAN:
        return math.sqrt(float(np.sum(d * d)))
    if metric.kind is MetricKind.MANHATTAN:
        return float(np.sum(np.abs(d)))
    diag = np.asarray(metric.mahalanobis_diag, dtype=np.float64)
    if diag.shape[0] != d.shape[0]:
        raise ConfigurationError(
            f"mahalanobis_diag length {diag.shape[0]} does not match vector length {d.shape[0]}"
        )
    return math.sqrt(float(np.sum((d * d) / diag)))


def project_point(
    camera_pose: Pose,
    fov_y: float,
    resolution: Tuple[int, int],
    world_point: Vec3,
) -> Optional[Tuple[float, float]]:
    """Pinhole projection of a world point to pixel coordinates.

    The camera looks along its local -z with +y up. Returns (u, v) with u
    rightward and v downward, or None when the point is on or behind the
    image plane. The focal length is set by the vertical field of view:
    f = (h/2) / tan(fov_y / 2).
    """
    w, h = resolution
    if not (isinstance(w, int) and isinstance(h, int)) or w < 1 or h < 1:
        raise ConfigurationError(f"resolution must be positive integers, got {resolution!r}")
    if not (math.isfinite(fov_y) and 0.0 < fov_y < math.pi):
        raise ConfigurationError(f"fov_y must lie in (0, pi), got {fov_y!r}")
    p = camera_pose.inverse().transform(world_point)
    if p.z >= _BEHIND_CAMERA_Z:
        return None
    f = (h / 2.0) / math.tan(fov_y / 2.0)
    inv_depth = 1.0 / (-p.z)
    u = w / 2.0 + f * p.x * inv_depth
    v = h / 2.0 - f * p.y * inv_depth
    return (u, v)


def look_at_pose(eye: Vec3, target: Vec3, up: Vec3 = Vec3(0.0, 0.0, 1.0)) -> Pose:
    """Camera pose at eye looking toward target with the given up hint."""
    forward = (target - eye).normalized()
    side = forward.cross(up)
    if side.norm() < _DEGENERATE_NORM:
        # view direction parallel to up; fall back to a fixed secondary hint
        side = forward.cross(Vec3(0.0, 1.0, 0.0))
        if side.norm() < _DEGENERATE_NORM:
            side = forward.cross(Vec3(1.0, 0.0, 0.0))
    s = side.normalized()
    u = s.cross(forward)
    m = np.array(
        [
            [s.x, u.x, -forward.x],
            [s.y, u.y, -forward.y],
            [s.z, u.z, -forward.z],
        ],
        dtype=np.float64,
    )
    return Pose(eye, UnitQuat.from_matrix(m))
