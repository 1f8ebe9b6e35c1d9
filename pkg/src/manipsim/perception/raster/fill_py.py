"""Pure-python triangle fill, the reference rasterizer backend.

Vertices arrive as 1/16-subpixel fixed point (int64), already snapped by the
render pipeline. Coverage follows the top-left fill rule evaluated at pixel
centers (16*p + 8), the depth test is a strict less-than on range depth
(camera-frame z scaled along the pixel ray), and per-vertex 1/z interpolates
affinely in screen space which makes the depth exact for planar triangles.
UV interpolates affinely as a documented simplification.

Every float expression here is mirrored operation-for-operation in
_fill_cy.pyx: changing one side without the other breaks bitwise parity.
The compiled build disables FMA contraction for the same reason.
"""

from __future__ import annotations

import numpy as np

MODE_FLAT = 0
MODE_CHECKER = 1
MODE_NOISE = 2
MODE_IMAGE = 3

_K1 = np.uint64(0x9E3779B97F4A7C15)
_K2 = np.uint64(0xC2B2AE3D27D4EB4F)
_K3 = np.uint64(0xD6E8FEB86659FD93)
_M1 = np.uint64(0xFF51AFD7ED558CCD)
_M2 = np.uint64(0xC4CEB9FE1A85EC53)
_S33 = np.uint64(33)
_S11 = np.uint64(11)
_INV_2_53 = 1.0 / 9007199254740992.0


def _topleft(ax, ay, bx, by):
    # directed edge a->b of a positive-area (screen CW, y down) triangle
    return (ay == by and bx > ax) or by < ay


def _hash01(cu, cv, seed):
    """splitmix-style avalanche of a lattice cell, uniform in [0, 1)."""
    # scalar product in python ints: numpy warns on wrapping scalar ops
    seed_mix = np.uint64((int(seed) * int(_K3)) & 0xFFFFFFFFFFFFFFFF)
    h = cu.astype(np.int64).view(np.uint64) * _K1
    h = h ^ (cv.astype(np.int64).view(np.uint64) * _K2)
    h = h ^ seed_mix
    h = h ^ (h >> _S33)
    h = h * _M1
    h = h ^ (h >> _S33)
    h = h * _M2
    h = h ^ (h >> _S33)
    return (h >> _S11).astype(np.float64) * _INV_2_53


def _to_u8(col):
    return np.clip(np.floor(col * 255.0 + 0.5), 0.0, 255.0).astype(np.uint8)


def fill(rgb, depth, idmask, tri_v, tri_iz, tri_entity, tri_mode, tri_flat,
         tri_pal, tri_scale, tri_seed, tri_uv, tri_tex, atlas,
         focal, cx, cy):
    """Rasterize triangles in order into rgb/depth/idmask (in place).

    rgb        (h, w, 3) uint8
    depth      (h, w) float64, background +inf
    idmask     (h, w) int32, background 0
    tri_v      (n, 6) int64 fixed-point x0 y0 x1 y1 x2 y2
    tri_iz     (n, 3) float64 per-vertex 1/z (camera z is negative, iz > 0)
    tri_entity (n,) int32 id_table index
    tri_mode   (n,) int32 MODE_*
    tri_flat   (n, 3) uint8 pre-shaded flat color
    tri_pal    (n, 2, 3) float64 pre-shaded palette in [0, 1] scale
    tri_scale  (n,) float64 procedural texture scale
    tri_seed   (n,) uint64 noise seed
    tri_uv     (n, 6) float64 per-corner u v
    tri_tex    (n, 3) int64 atlas offset, tex width, tex height
    atlas      (m,) uint8 flattened rgb texels
    focal, cx, cy   pinhole intrinsics in pixels, for ray-range depth
    """
    h, w = depth.shape
    hi_x = 16 * (w - 1) + 8
    hi_y = 16 * (h - 1) + 8
    for t in range(tri_v.shape[0]):
        x0, y0, x1, y1, x2, y2 = (int(c) for c in tri_v[t])
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area <= 0:
            continue
        minx = min(x0, x1, x2)
        maxx = max(x0, x1, x2)
        miny = min(y0, y1, y2)
        maxy = max(y0, y1, y2)
        if maxx < 8 or minx > hi_x or maxy < 8 or miny > hi_y:
            continue
        # non-negative numerators keep floor == C truncation
        px0 = (max(minx, 8) - 8 + 15) // 16
        px1 = (min(maxx, hi_x) - 8) // 16
        py0 = (max(miny, 8) - 8 + 15) // 16
        py1 = (min(maxy, hi_y) - 8) // 16
        if px1 < px0 or py1 < py0:
            continue
        b0 = 0 if _topleft(x1, y1, x2, y2) else -1
        b1 = 0 if _topleft(x2, y2, x0, y0) else -1
        b2 = 0 if _topleft(x0, y0, x1, y1) else -1

        pxs = np.arange(px0, px1 + 1, dtype=np.int64)
        pys = np.arange(py0, py1 + 1, dtype=np.int64)
        gx, gy = np.meshgrid(pxs * 16 + 8, pys * 16 + 8)
        w0 = (x2 - x1) * (gy - y1) - (y2 - y1) * (gx - x1)
        w1 = (x0 - x2) * (gy - y2) - (y0 - y2) * (gx - x2)
        w2 = (x1 - x0) * (gy - y0) - (y1 - y0) * (gx - x0)
        inside = ((w0 + b0) >= 0) & ((w1 + b1) >= 0) & ((w2 + b2) >= 0)
        if not inside.any():
            continue
        iy, ix = np.nonzero(inside)
        row = pys[iy]
        col = pxs[ix]

        area_d = float(area)
        l0 = w0[iy, ix].astype(np.float64) / area_d
        l1 = w1[iy, ix].astype(np.float64) / area_d
        l2 = w2[iy, ix].astype(np.float64) / area_d
        iz = l0 * tri_iz[t, 0] + l1 * tri_iz[t, 1] + l2 * tri_iz[t, 2]
        z = 1.0 / iz
        dxr = ((col.astype(np.float64) + 0.5) - cx) / focal
        dyr = ((row.astype(np.float64) + 0.5) - cy) / focal
        s = np.sqrt(1.0 + dxr * dxr + dyr * dyr)
        d = z * s
        closer = d < depth[row, col]
        if not closer.any():
            continue
        row = row[closer]
        col = col[closer]
        d = d[closer]
        l0 = l0[closer]
        l1 = l1[closer]
        l2 = l2[closer]

        mode = int(tri_mode[t])
        if mode == MODE_FLAT:
            rgb[row, col] = tri_flat[t]
        else:
            u = l0 * tri_uv[t, 0] + l1 * tri_uv[t, 2] + l2 * tri_uv[t, 4]
            v = l0 * tri_uv[t, 1] + l1 * tri_uv[t, 3] + l2 * tri_uv[t, 5]
            if mode == MODE_CHECKER:
                cu = np.floor(u * tri_scale[t]).astype(np.int64)
                cv = np.floor(v * tri_scale[t]).astype(np.int64)
                par = ((cu + cv) & 1).astype(bool)
                colr = np.where(par[:, None], tri_pal[t, 1], tri_pal[t, 0])
            elif mode == MODE_NOISE:
                cu = np.floor(u * tri_scale[t]).astype(np.int64)
                cv = np.floor(v * tri_scale[t]).astype(np.int64)
                tt = _hash01(cu, cv, tri_seed[t])
                colr = tri_pal[t, 0] + (tri_pal[t, 1] - tri_pal[t, 0]) * tt[:, None]
            else:
                toff, tw, th = (int(c) for c in tri_tex[t])
                fu = u - np.floor(u)
                fv = v - np.floor(v)
                tx = np.minimum((fu * float(tw)).astype(np.int64), tw - 1)
                ty = np.minimum((fv * float(th)).astype(np.int64), th - 1)
                base = toff + (ty * tw + tx) * 3
                texel = np.stack(
                    [atlas[base], atlas[base + 1], atlas[base + 2]], axis=1)
                colr = (texel.astype(np.float64) / 255.0) * tri_pal[t, 0]
            rgb[row, col] = _to_u8(colr)
        depth[row, col] = d
        idmask[row, col] = np.int32(tri_entity[t])
