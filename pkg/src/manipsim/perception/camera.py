"""Pinhole camera specification used by the renderer."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ..errors import ConfigurationError
from ..geometry import Pose, Vec3, look_at_pose

MIN_RESOLUTION = 16
MAX_RESOLUTION = 1024


@dataclass(frozen=True)
class CameraSpec:
    """A named pinhole camera aimed at a point.

    The optical axis looks along -z of the derived pose with +y up in the
    image; keeping position and look_at (rather than a raw pose) lets
    randomization jitter the position and re-aim at the same target.
    """

    name: str
    position: Vec3
    look_at: Vec3
    fov_y: float
    resolution: tuple[int, int]
    up: Vec3 = Vec3(0.0, 0.0, 1.0)

    def __post_init__(self):
        if not self.name:
            raise ConfigurationError("camera needs a non-empty name")
        if not 0.0 < self.fov_y < math.pi:
            raise ConfigurationError(
                f"camera {self.name!r}: fov_y must be in (0, pi), got {self.fov_y}")
        w, h = self.resolution
        for v in (w, h):
            if not isinstance(v, int) or not MIN_RESOLUTION <= v <= MAX_RESOLUTION:
                raise ConfigurationError(
                    f"camera {self.name!r}: resolution sides must be ints in "
                    f"[{MIN_RESOLUTION}, {MAX_RESOLUTION}], got {self.resolution}")
        if (self.position - self.look_at).norm() < 1e-9:
            raise ConfigurationError(
                f"camera {self.name!r}: position coincides with look_at")

    def pose(self) -> Pose:
        return look_at_pose(self.position, self.look_at, self.up)

    def intrinsics(self) -> tuple[float, float, float]:
        """(focal_px, cx, cy) with focal from the vertical field of view."""
        w, h = self.resolution
        f = (h / 2.0) / math.tan(self.fov_y / 2.0)
        return f, w / 2.0, h / 2.0

    def moved_to(self, position: Vec3) -> "CameraSpec":
        """Same camera, same aim point, new eye position."""
        return replace(self, position=position)
