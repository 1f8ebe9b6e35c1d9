"""Image-to-vector encoders for latent observations and encoder rewards.

Encoders are registered by name so configs can refer to them as strings.
The two built-ins bracket the fidelity range: oracle_centroid reads tracked
object positions back out of the mask and depth channels (a stand-in for a
well-trained detector), downsample is a pure appearance code.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from .annotate import annotation_for
from .render import Image


class Encoder:
    """Stateful per-episode image encoder; subclass and register a factory."""

    dim: int = 0

    def reset(self) -> None:
        """Clear any per-episode state (called at environment reset)."""

    def encode(self, image: Image) -> np.ndarray:
        raise NotImplementedError


class OracleCentroidEncoder(Encoder):
    """3 dims per tracked entity: its visible centroid lifted to camera frame.

    The entity's mask centroid and mean range depth are pushed through the
    inverse pinhole model. While an entity is fully occluded or off-frame
    its last known code is held (zeros before it was ever seen), mimicking
    a tracker that coasts through dropouts.
    """

    def __init__(self, tracked: tuple[str, ...]):
        if not tracked:
            raise ConfigurationError("oracle_centroid needs tracked entity ids")
        self.tracked = tracked
        self.dim = 3 * len(tracked)
        self._last = np.zeros(self.dim)

    def reset(self) -> None:
        self._last = np.zeros(self.dim)

    def encode(self, image: Image) -> np.ndarray:
        f, cx, cy = image.intrinsics()
        code = self._last.copy()
        for k, entity in enumerate(self.tracked):
            ann = annotation_for(image, entity)
            if ann is None:
                continue
            u, v = ann.centroid
            dx = (u - cx) / f
            dy = (cy - v) / f
            ray = np.array([dx, dy, -1.0])
            ray /= np.linalg.norm(ray)
            code[3 * k: 3 * k + 3] = ray * ann.mean_depth
        self._last = code
        return code.copy()


class DownsampleEncoder(Encoder):
    """k*k*3 dims: mean RGB (in [0,1]) over a k-by-k grid of cells."""

    def __init__(self, k: int = 4):
        if not isinstance(k, int) or not 1 <= k <= 32:
            raise ConfigurationError(f"downsample grid k must be in [1, 32], got {k!r}")
        self.k = k
        self.dim = k * k * 3

    def encode(self, image: Image) -> np.ndarray:
        k = self.k
        h, w = image.rgb.shape[:2]
        ys = np.linspace(0, h, k + 1).astype(int)
        xs = np.linspace(0, w, k + 1).astype(int)
        out = np.empty((k, k, 3))
        scaled = image.rgb.astype(np.float64) / 255.0
        for i in range(k):
            for j in range(k):
                cell = scaled[ys[i]:ys[i + 1], xs[j]:xs[j + 1]]
                out[i, j] = cell.mean(axis=(0, 1))
        return out.reshape(-1)


_REGISTRY: dict[str, type] = {}


def register_encoder(name: str, cls: type) -> None:
    """Add an encoder class under a config-visible name (no overwrites)."""
    if name in _REGISTRY:
        raise ConfigurationError(f"encoder {name!r} is already registered")
    _REGISTRY[name] = cls


def encoder_names() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def make_encoder(name: str, params: dict, tracked: tuple[str, ...]) -> Encoder:
    """Instantiate a registered encoder.

    oracle_centroid receives the tracked entity ids; downsample takes an
    optional integer "k". Unknown names list what is available.
    """
    cls = _REGISTRY.get(name)
    if cls is None:
        raise ConfigurationError(
            f"unknown encoder {name!r}; registered: {', '.join(encoder_names())}")
    if cls is OracleCentroidEncoder:
        return OracleCentroidEncoder(tracked)
    if cls is DownsampleEncoder:
        k = params.get("k", 4)
        return DownsampleEncoder(k)
    return cls(**params)


register_encoder("oracle_centroid", OracleCentroidEncoder)
register_encoder("downsample", DownsampleEncoder)
