"""Shared visual state: lighting and surface textures.

Kept separate so both the renderer and the randomizers can import it without
a dependency cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigurationError
from .geometry import Vec3


class TextureKind(str, Enum):
    CHECKER = "checker"
    NOISE = "noise"
    IMAGE = "image"


@dataclass(frozen=True)
class Texture:
    """Procedural or image texture applied over an object's base shading.

    scale is tiles per UV unit for checker/noise. colors are the two-color
    palette (RGB in [0,1]). seed feeds the integer hash of the noise kind.
    image (HxWx3 uint8) is required for the image kind only.
    """

    kind: TextureKind
    scale: float = 4.0
    colors: Tuple[Tuple[float, float, float], Tuple[float, float, float]] = (
        (1.0, 1.0, 1.0),
        (0.25, 0.25, 0.25),
    )
    seed: int = 0
    image: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TextureKind(self.kind))
        if not (math.isfinite(self.scale) and self.scale > 0.0):
            raise ConfigurationError(f"texture scale must be positive, got {self.scale!r}")
        if self.kind is TextureKind.IMAGE:
            img = self.image
            if img is None or img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
                raise ConfigurationError("image texture requires an HxWx3 uint8 array")
        elif self.image is not None:
            raise ConfigurationError(f"{self.kind.value} texture does not take an image")


@dataclass(frozen=True)
class LightingState:
    """One directional light plus an ambient floor.

    direction is the light's travel direction (unit); a surface is lit by
    ambient + diffuse * max(0, dot(normal, -direction)). specular is carried
    for forward compatibility and ignored by the flat shader.
    """

    direction: Vec3
    color: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    ambient: float = 0.35
    diffuse: float = 0.65
    specular: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "direction", self.direction.normalized())
        for name in ("ambient", "diffuse", "specular"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 2.0):
                raise ConfigurationError(f"lighting {name} must lie in [0, 2], got {v!r}")
        if len(self.color) != 3 or any(not (math.isfinite(c) and 0.0 <= c <= 1.0) for c in self.color):
            raise ConfigurationError(f"lighting color must be 3 values in [0, 1], got {self.color!r}")


def default_lighting() -> LightingState:
    return LightingState(direction=Vec3(-0.35, 0.25, -1.0))
