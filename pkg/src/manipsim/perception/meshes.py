"""Triangle tessellations for the shape primitives.

Every mesh stays under 512 triangles and winds its faces outward
(counter-clockwise seen from outside). Vertices carry a uv so procedural
and image textures have somewhere to live; the renderer interpolates those
uvs affinely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import Vec3
from ..scene import ShapePrimitive

_SPHERE_SLICES = 16
_SPHERE_STACKS = 12
_CYL_SLICES = 24
_CAP_SLICES = 12


@dataclass(frozen=True)
class Mesh:
    """vertices (k,3) float64, faces (t,3) int32, uv (k,2) float64."""

    vertices: np.ndarray
    faces: np.ndarray
    uv: np.ndarray

    def __post_init__(self):
        if self.faces.shape[0] > 512:
            raise ValueError(f"mesh exceeds 512 triangles: {self.faces.shape[0]}")


def _finish(verts, faces, uv) -> Mesh:
    v = np.asarray(verts, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int32)
    t = np.asarray(uv, dtype=np.float64)
    # flip any inward-facing triangle; meshes here are star-shaped around 0
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    n = np.cross(b - a, c - a)
    centroid = (a + b + c) / 3.0
    inward = np.einsum("ij,ij->i", n, centroid) < 0.0
    f[inward] = f[inward][:, [0, 2, 1]]
    return Mesh(v, f, t)


def _lat_long(rows, slices, faces_out):
    """Index grid faces between consecutive rows, wrapping each ring."""
    for r in range(len(rows) - 1):
        top, bot = rows[r], rows[r + 1]
        for j in range(slices):
            j1 = (j + 1) % slices
            quad = (top[j], top[j1], bot[j], bot[j1])
            # drop degenerate triangles at poles (row collapsed to a point)
            if top[j] != top[j1]:
                faces_out.append((top[j], bot[j], top[j1]))
            if bot[j] != bot[j1]:
                faces_out.append((top[j1], bot[j], bot[j1]))


def _sphere(radius: float) -> Mesh:
    verts, uv, rows = [], [], []
    for s in range(_SPHERE_STACKS + 1):
        theta = np.pi * s / _SPHERE_STACKS
        if s == 0 or s == _SPHERE_STACKS:
            rows.append([len(verts)] * _SPHERE_SLICES)
            verts.append((0.0, 0.0, radius if s == 0 else -radius))
            uv.append((0.5, s / _SPHERE_STACKS))
            continue
        row = []
        for j in range(_SPHERE_SLICES):
            phi = 2.0 * np.pi * j / _SPHERE_SLICES
            row.append(len(verts))
            verts.append((radius * np.sin(theta) * np.cos(phi),
                          radius * np.sin(theta) * np.sin(phi),
                          radius * np.cos(theta)))
            uv.append((j / _SPHERE_SLICES, s / _SPHERE_STACKS))
        rows.append(row)
    faces = []
    _lat_long(rows, _SPHERE_SLICES, faces)
    return _finish(verts, faces, uv)


def _box(hx: float, hy: float, hz: float) -> Mesh:
    # per-face vertices so each face gets its own unit uv square
    faces_def = [
        ((+1, 0, 0), (0, +1, 0), (0, 0, +1)),
        ((-1, 0, 0), (0, -1, 0), (0, 0, +1)),
        ((0, +1, 0), (-1, 0, 0), (0, 0, +1)),
        ((0, -1, 0), (+1, 0, 0), (0, 0, +1)),
        ((0, 0, +1), (0, +1, 0), (+1, 0, 0)),
        ((0, 0, -1), (0, -1, 0), (+1, 0, 0)),
    ]
    half = np.array([hx, hy, hz])
    verts, uv, faces = [], [], []
    for normal, ua, va in faces_def:
        n = np.array(normal, dtype=np.float64)
        u = np.array(ua, dtype=np.float64)
        v = np.array(va, dtype=np.float64)
        base = len(verts)
        for du, dv, tu, tv in ((-1, -1, 0, 0), (+1, -1, 1, 0),
                               (+1, +1, 1, 1), (-1, +1, 0, 1)):
            verts.append(tuple((n + u * du + v * dv) * half))
            uv.append((tu, tv))
        faces.append((base, base + 1, base + 2))
        faces.append((base, base + 2, base + 3))
    return _finish(verts, faces, uv)


def _cylinder(radius: float, half_height: float) -> Mesh:
    verts, uv, faces = [], [], []
    side_rows = []
    for z, tv in ((half_height, 1.0), (-half_height, 0.0)):
        row = []
        for j in range(_CYL_SLICES):
            phi = 2.0 * np.pi * j / _CYL_SLICES
            row.append(len(verts))
            verts.append((radius * np.cos(phi), radius * np.sin(phi), z))
            uv.append((j / _CYL_SLICES, tv))
        side_rows.append(row)
    _lat_long(side_rows, _CYL_SLICES, faces)
    for z in (half_height, -half_height):
        center = len(verts)
        verts.append((0.0, 0.0, z))
        uv.append((0.5, 0.5))
        ring = []
        for j in range(_CYL_SLICES):
            phi = 2.0 * np.pi * j / _CYL_SLICES
            ring.append(len(verts))
            verts.append((radius * np.cos(phi), radius * np.sin(phi), z))
            uv.append((0.5 + 0.5 * np.cos(phi), 0.5 + 0.5 * np.sin(phi)))
        for j in range(_CYL_SLICES):
            faces.append((center, ring[j], ring[(j + 1) % _CYL_SLICES]))
    return _finish(verts, faces, uv)


def capsule(radius: float, half_length: float) -> Mesh:
    """Capsule along +z: cylinder of half_length with hemispherical ends.

    Built as a latitude sphere whose equator is split and shifted apart, so
    the band between the duplicated equator rows is the cylindrical side.
    """
    stacks = 6  # per-cap latitude steps is stacks // 2
    thetas, shifts = [], []
    for s in range(stacks + 1):
        thetas.append(np.pi * s / stacks)
        shifts.append(half_length if s <= stacks // 2 else -half_length)
    # duplicate the equator with the opposite shift to open the cylinder
    thetas.insert(stacks // 2 + 1, np.pi / 2.0)
    shifts.insert(stacks // 2 + 1, -half_length)

    total_arc = np.pi * radius + 2.0 * half_length
    verts, uv, rows = [], [], []
    arc = 0.0
    prev = None
    for theta, shift in zip(thetas, shifts):
        z = radius * np.cos(theta) + shift
        r = radius * np.sin(theta)
        if prev is not None:
            arc += abs(z - prev)  # meridian arc approximated by chord
        prev = z
        tv = 1.0 - min(arc / total_arc, 1.0)
        if r < 1e-12:
            rows.append([len(verts)] * _CAP_SLICES)
            verts.append((0.0, 0.0, z))
            uv.append((0.5, tv))
            continue
        row = []
        for j in range(_CAP_SLICES):
            phi = 2.0 * np.pi * j / _CAP_SLICES
            row.append(len(verts))
            verts.append((r * np.cos(phi), r * np.sin(phi), z))
            uv.append((j / _CAP_SLICES, tv))
        rows.append(row)
    faces = []
    _lat_long(rows, _CAP_SLICES, faces)
    return _finish(verts, faces, uv)


_CACHE: dict[tuple, Mesh] = {}


def shape_mesh(shape: ShapePrimitive) -> Mesh:
    """Tessellation for a shape primitive, cached by kind and dimensions."""
    key = (shape.kind, shape.dims)
    got = _CACHE.get(key)
    if got is None:
        if shape.kind == "sphere":
            got = _sphere(shape.dims[0])
        elif shape.kind == "box":
            got = _box(*shape.dims)
        elif shape.kind == "cylinder":
            got = _cylinder(shape.dims[0], shape.dims[1])
        else:
            raise ValueError(f"no tessellation for shape kind {shape.kind!r}")
        _CACHE[key] = got
    return got


def segment_capsule(a: Vec3, b: Vec3, radius: float):
    """Mesh and pose for a capsule spanning segment a..b (robot links).

    Returns (mesh, pose) where the mesh capsule axis +z maps onto the
    segment direction. Degenerate segments become spheres.
    """
    from ..geometry import Pose, UnitQuat, rotation_aligning

    d = b - a
    length = d.norm()
    mid = Vec3((a.x + b.x) * 0.5, (a.y + b.y) * 0.5, (a.z + b.z) * 0.5)
    if length < 1e-9:
        return _sphere_for_radius(radius), Pose(mid, UnitQuat.identity())
    rot = rotation_aligning(Vec3(0.0, 0.0, 1.0), d.scale(1.0 / length))
    mesh = _capsule_for(radius, length * 0.5)
    return mesh, Pose(mid, rot)


def _sphere_for_radius(radius: float) -> Mesh:
    key = ("sphere", (radius,))
    got = _CACHE.get(key)
    if got is None:
        got = _sphere(radius)
        _CACHE[key] = got
    return got


def _capsule_for(radius: float, half_length: float) -> Mesh:
    key = ("capsule", (radius, round(half_length, 9)))
    got = _CACHE.get(key)
    if got is None:
        got = capsule(radius, half_length)
        _CACHE[key] = got
    return got
