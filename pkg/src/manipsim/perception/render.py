"""Deterministic flat-shaded software renderer.

Pipeline per camera: tessellate each entity, transform to world, shade each
face once (ambient + diffuse, world-space normals), transform to the camera
frame, clip against the near plane, project through the pinhole model, snap
to 1/16-pixel fixed point, normalize winding, then hand the whole batch to
the raster backend. Everything before the kernel runs in shared python, so
backend parity only depends on the kernel itself.

Depth is range along the pixel ray (meters), background +inf. The id mask
holds indices into Image.id_table, 0 for background.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from ..geometry import Pose
from ..scene import EE_RADIUS, Scene
from ..visuals import LightingState, Texture, TextureKind, default_lighting
from . import raster
from .camera import CameraSpec
from .meshes import Mesh, segment_capsule, shape_mesh

NEAR_PLANE = 0.01
BACKGROUND_GRAY = 204
LINK_RADIUS = 0.035
_COORD_CLAMP = 1 << 24  # fixed-point guard band, keeps edge math in int64
ROBOT_COLOR = (0.55, 0.57, 0.62)
EE_COLOR = (0.85, 0.30, 0.10)


@dataclass
class Image:
    """One rendered frame with its pixel-exact annotations sources."""

    rgb: np.ndarray          # (h, w, 3) uint8
    depth: np.ndarray        # (h, w) float64, range in meters, +inf empty
    id_mask: np.ndarray      # (h, w) int32 index into id_table, 0 empty
    id_table: tuple[str, ...]
    camera: str
    fov_y: float

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    def intrinsics(self) -> tuple[float, float, float]:
        h = self.rgb.shape[0]
        f = (h / 2.0) / np.tan(self.fov_y / 2.0)
        return f, self.rgb.shape[1] / 2.0, h / 2.0

    def copy(self) -> "Image":
        return Image(self.rgb.copy(), self.depth.copy(), self.id_mask.copy(),
                     self.id_table, self.camera, self.fov_y)


def _entity_list(scene: Scene, overrides: Mapping[str, Pose]):
    """Draw list: (entity_id, mesh, pose, base_rgb, texture)."""
    out = []
    for obj in scene.objects:
        pose = overrides.get(obj.id) or obj.pose
        out.append((obj.id, shape_mesh(obj.shape), pose,
                    tuple(obj.color[:3]), obj.texture))
    pts = [scene.robot.base_pose.position]
    pts.extend(lp.position for lp in scene.link_poses)
    for i in range(len(pts) - 1):
        mesh, pose = segment_capsule(pts[i], pts[i + 1], LINK_RADIUS)
        name = f"robot_link_{i}"
        out.append((name, mesh, overrides.get(name) or pose, ROBOT_COLOR, None))
    ee_pose = overrides.get("ee") or Pose.from_position(scene.ee_pose.position)
    out.append(("ee", shape_mesh_sphere(EE_RADIUS), ee_pose, EE_COLOR, None))
    return out


_EE_MESH_CACHE: dict[float, Mesh] = {}


def shape_mesh_sphere(radius: float) -> Mesh:
    got = _EE_MESH_CACHE.get(radius)
    if got is None:
        from .meshes import _sphere_for_radius
        got = _sphere_for_radius(radius)
        _EE_MESH_CACHE[radius] = got
    return got


def _clip_near(tri_cam: np.ndarray, tri_uv: np.ndarray):
    """Sutherland-Hodgman clip of one camera-space triangle at z = -NEAR.

    Returns list of (cam_vertex_triplet, uv_triplet); empty if fully behind.
    """
    inside = tri_cam[:, 2] <= -NEAR_PLANE
    if inside.all():
        return [(tri_cam, tri_uv)]
    if not inside.any():
        return []
    poly_v, poly_uv = [], []
    for i in range(3):
        j = (i + 1) % 3
        a, b = tri_cam[i], tri_cam[j]
        ua, ub = tri_uv[i], tri_uv[j]
        if inside[i]:
            poly_v.append(a)
            poly_uv.append(ua)
        if inside[i] != inside[j]:
            t = (-NEAR_PLANE - a[2]) / (b[2] - a[2])
            poly_v.append(a + t * (b - a))
            poly_uv.append(ua + t * (ub - ua))
    pieces = []
    for k in range(1, len(poly_v) - 1):
        pieces.append((np.stack([poly_v[0], poly_v[k], poly_v[k + 1]]),
                       np.stack([poly_uv[0], poly_uv[k], poly_uv[k + 1]])))
    return pieces


def _project_snap(cam_pts: np.ndarray, f: float, cx: float, cy: float):
    """Camera-space points -> (fixed-point int64 xy, 1/depth)."""
    depth = -cam_pts[:, 2]
    inv = 1.0 / depth
    u = cx + f * cam_pts[:, 0] * inv
    v = cy - f * cam_pts[:, 1] * inv
    fx = np.floor(u * 16.0 + 0.5)
    fy = np.floor(v * 16.0 + 0.5)
    np.clip(fx, -_COORD_CLAMP, _COORD_CLAMP, out=fx)
    np.clip(fy, -_COORD_CLAMP, _COORD_CLAMP, out=fy)
    return fx.astype(np.int64), fy.astype(np.int64), inv


class _Batch:
    """Accumulates per-triangle kernel inputs across entities."""

    def __init__(self):
        self.v, self.iz, self.entity, self.mode = [], [], [], []
        self.flat, self.pal, self.scale, self.seed = [], [], [], []
        self.uv, self.tex = [], []
        self.atlas = [np.zeros(3, dtype=np.uint8)]  # slot 0 placeholder
        self._atlas_off = 3

    def add_atlas(self, image: np.ndarray) -> tuple[int, int, int]:
        flat = np.ascontiguousarray(image, dtype=np.uint8).reshape(-1)
        off = self._atlas_off
        self.atlas.append(flat)
        self._atlas_off += flat.size
        return off, image.shape[1], image.shape[0]

    def arrays(self):
        n = len(self.v)
        if n == 0:
            return None
        return (np.asarray(self.v, dtype=np.int64),
                np.asarray(self.iz, dtype=np.float64),
                np.asarray(self.entity, dtype=np.int32),
                np.asarray(self.mode, dtype=np.int32),
                np.asarray(self.flat, dtype=np.uint8),
                np.asarray(self.pal, dtype=np.float64),
                np.asarray(self.scale, dtype=np.float64),
                np.asarray(self.seed, dtype=np.uint64),
                np.asarray(self.uv, dtype=np.float64),
                np.asarray(self.tex, dtype=np.int64),
                np.concatenate(self.atlas))


def _shade(normal_unit, light: LightingState) -> float:
    ndotl = max(0.0, -(normal_unit[0] * light.direction.x
                       + normal_unit[1] * light.direction.y
                       + normal_unit[2] * light.direction.z))
    return light.ambient + light.diffuse * ndotl


def _emit_entity(batch: _Batch, idx: int, mesh: Mesh, pose: Pose,
                 base_rgb, texture: Optional[Texture],
                 cam_rot, cam_pos, f, cx, cy, light: LightingState,
                 atlas_slot):
    rot = pose.orientation.to_matrix()
    verts_w = mesh.vertices @ rot.T
    verts_w += np.array(pose.position.as_tuple())
    # p_cam = R_cam^T (p - t): row vectors right-multiply by R_cam
    verts_c = (verts_w - cam_pos) @ cam_rot

    faces = mesh.faces
    a = verts_w[faces[:, 0]]
    b = verts_w[faces[:, 1]]
    c = verts_w[faces[:, 2]]
    normals = np.cross(b - a, c - a)
    nn = np.linalg.norm(normals, axis=1)
    ok = nn > 1e-12
    lc = light.color

    mode = raster.MODE_FLAT
    scale = 0.0
    seed = 0
    tex_info = (0, 1, 1)
    if texture is not None:
        if texture.kind is TextureKind.CHECKER:
            mode = raster.MODE_CHECKER
        elif texture.kind is TextureKind.NOISE:
            mode = raster.MODE_NOISE
        else:
            mode = raster.MODE_IMAGE
            if atlas_slot[0] is None:
                atlas_slot[0] = batch.add_atlas(texture.image)
            tex_info = atlas_slot[0]
        scale = float(texture.scale)
        seed = int(texture.seed) & 0xFFFFFFFFFFFFFFFF

    zero_uv = np.zeros(6)
    for fi in range(faces.shape[0]):
        if not ok[fi]:
            continue
        n_unit = normals[fi] / nn[fi]
        shade = _shade(n_unit, light)
        tri_cam = verts_c[faces[fi]]
        tri_uv = mesh.uv[faces[fi]]
        for cam_piece, uv_piece in _clip_near(tri_cam, tri_uv):
            fx, fy, inv = _project_snap(cam_piece, f, cx, cy)
            area = ((fx[1] - fx[0]) * (fy[2] - fy[0])
                    - (fy[1] - fy[0]) * (fx[2] - fx[0]))
            if area == 0:
                continue
            order = (0, 1, 2) if area > 0 else (0, 2, 1)
            v6 = np.empty(6, dtype=np.int64)
            iz3 = np.empty(3)
            uv6 = np.empty(6)
            for slot, src in enumerate(order):
                v6[2 * slot] = fx[src]
                v6[2 * slot + 1] = fy[src]
                iz3[slot] = inv[src]
                uv6[2 * slot] = uv_piece[src, 0]
                uv6[2 * slot + 1] = uv_piece[src, 1]
            batch.v.append(v6)
            batch.iz.append(iz3)
            batch.entity.append(idx)
            batch.mode.append(mode)
            if mode == raster.MODE_FLAT:
                col = np.array([base_rgb[0] * lc[0], base_rgb[1] * lc[1],
                                base_rgb[2] * lc[2]]) * shade
                batch.flat.append(
                    np.clip(np.floor(col * 255.0 + 0.5), 0.0, 255.0).astype(np.uint8))
                batch.pal.append(np.zeros((2, 3)))
                batch.uv.append(zero_uv)
            else:
                batch.flat.append(np.zeros(3, dtype=np.uint8))
                if mode == raster.MODE_IMAGE:
                    pal = np.array([[lc[0] * shade, lc[1] * shade, lc[2] * shade],
                                    [0.0, 0.0, 0.0]])
                else:
                    c0, c1 = texture.colors
                    pal = np.array([
                        [c0[0] * lc[0] * shade, c0[1] * lc[1] * shade,
                         c0[2] * lc[2] * shade],
                        [c1[0] * lc[0] * shade, c1[1] * lc[1] * shade,
                         c1[2] * lc[2] * shade]])
                batch.pal.append(pal)
                batch.uv.append(uv6)
            batch.scale.append(scale)
            batch.seed.append(seed)
            batch.tex.append(tex_info)


def render(scene: Scene, camera: CameraSpec,
           lighting: Optional[LightingState] = None,
           pose_overrides: Optional[Mapping[str, Pose]] = None) -> Image:
    """Render the scene through one camera into an Image."""
    light = lighting if lighting is not None else default_lighting()
    overrides = dict(pose_overrides or {})
    w, h = camera.resolution
    rgb = np.full((h, w, 3), BACKGROUND_GRAY, dtype=np.uint8)
    depth = np.full((h, w), np.inf, dtype=np.float64)
    idmask = np.zeros((h, w), dtype=np.int32)

    cam_pose = camera.pose()
    cam_rot = cam_pose.orientation.to_matrix()
    cam_pos = np.array(cam_pose.position.as_tuple())
    f, cx, cy = camera.intrinsics()

    entities = _entity_list(scene, overrides)
    id_table = ("",) + tuple(e[0] for e in entities)
    batch = _Batch()
    for idx, (name, mesh, pose, base_rgb, texture) in enumerate(entities, start=1):
        atlas_slot = [None]
        _emit_entity(batch, idx, mesh, pose, base_rgb, texture,
                     cam_rot, cam_pos, f, cx, cy, light, atlas_slot)
    arrays = batch.arrays()
    if arrays is not None:
        raster.fill(rgb, depth, idmask, *arrays, f, cx, cy)
    return Image(rgb, depth, idmask, id_table, camera.name, camera.fov_y)
