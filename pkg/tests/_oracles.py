"""Independent reference implementations used only by tests.

These deliberately take different computational routes than the package
(homogeneous 4x4 matrices, scipy matrix exponentials) so agreement is
evidence, not tautology.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm


def skew(v):
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def quat_to_matrix_oracle(w, x, y, z):
    """Quaternion -> rotation matrix via axis-angle + matrix exponential."""
    n = np.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    vn = np.sqrt(x * x + y * y + z * z)
    if vn < 1e-300:
        return np.eye(3)
    angle = 2.0 * np.arctan2(vn, w)
    axis = np.array([x, y, z]) / vn
    return expm(skew(axis * angle))


def pose_to_hmat(pose):
    """manipsim Pose -> homogeneous 4x4."""
    m = np.eye(4)
    m[:3, :3] = quat_to_matrix_oracle(
        pose.orientation.w, pose.orientation.x, pose.orientation.y, pose.orientation.z
    )
    m[:3, 3] = [pose.position.x, pose.position.y, pose.position.z]
    return m


def hmat_translation(t):
    m = np.eye(4)
    m[:3, 3] = t
    return m


def hmat_rot_axis(axis, angle):
    m = np.eye(4)
    m[:3, :3] = expm(skew(np.asarray(axis, dtype=float) * angle))
    return m


def apply_hmat(m, p):
    q = m @ np.array([p[0], p[1], p[2], 1.0])
    return q[:3]


def fk_oracle(base_hmat, origins, axes, kinds, q):
    """Serial-chain FK on 4x4 matrices.

    origins: list of 4x4 fixed transforms (joint i origin in frame i-1)
    axes: unit axes in the joint frame; kinds: "revolute" | "prismatic"
    Returns the list of per-link 4x4 frames (after each joint's motion).
    """
    frames = []
    m = np.array(base_hmat, dtype=float)
    for origin, axis, kind, qi in zip(origins, axes, kinds, q):
        m = m @ origin
        if kind == "revolute":
            m = m @ hmat_rot_axis(axis, qi)
        elif kind == "prismatic":
            m = m @ hmat_translation(np.asarray(axis, dtype=float) * qi)
        else:
            raise ValueError(kind)
        frames.append(m.copy())
    return frames
