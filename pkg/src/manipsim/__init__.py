"""manipsim: deterministic robotic-manipulation simulation toolkit.

Pure-Python world model with a gym-style environment API, a software
renderer with a compiled hot kernel, domain randomization, scripted and
CEM-trained agents, dataset generation, and a WebSocket session service.
Everything is reproducible bit-for-bit from (config, seed, actions).
"""

from .errors import (
    AgentError,
    ConfigurationError,
    LifecycleError,
    ManipSimError,
    ProtocolError,
    SpawnError,
)
from .geometry import (
    DistanceMetric,
    MetricKind,
    Pose,
    UnitQuat,
    Vec3,
    compute_distance,
    look_at_pose,
    pose_compose,
    pose_inverse,
    project_point,
    transform_point,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ManipSimError",
    "ConfigurationError",
    "SpawnError",
    "LifecycleError",
    "AgentError",
    "ProtocolError",
    "Vec3",
    "UnitQuat",
    "Pose",
    "DistanceMetric",
    "MetricKind",
    "compute_distance",
    "project_point",
    "look_at_pose",
    "pose_compose",
    "pose_inverse",
    "transform_point",
    "make_env",
    "load_config",
]


def __getattr__(name):
    # heavier modules load lazily so `import manipsim` stays cheap
    if name == "make_env":
        from .env import make_env

        return make_env
    if name == "load_config":
        from .config import load_config

        return load_config
    raise AttributeError(f"module 'manipsim' has no attribute {name!r}")
