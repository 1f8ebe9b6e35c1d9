# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled triangle fill.

Operation-for-operation mirror of fill_py.fill: every float expression keeps
the same shape and evaluation order, and the build disables FMA contraction,
so both backends produce bitwise-identical buffers. Keep the two files in
lockstep when changing either.
"""

from libc.math cimport floor, sqrt

ctypedef unsigned long long u64
ctypedef long long i64
ctypedef unsigned char u8

cdef u64 K1 = <u64> 0x9E3779B97F4A7C15
cdef u64 K2 = <u64> 0xC2B2AE3D27D4EB4F
cdef u64 K3 = <u64> 0xD6E8FEB86659FD93
cdef u64 M1 = <u64> 0xFF51AFD7ED558CCD
cdef u64 M2 = <u64> 0xC4CEB9FE1A85EC53
cdef double INV_2_53 = 1.0 / 9007199254740992.0

DEF MODE_FLAT = 0
DEF MODE_CHECKER = 1
DEF MODE_NOISE = 2
DEF MODE_IMAGE = 3


cdef inline bint _topleft(i64 ax, i64 ay, i64 bx, i64 by) nogil:
    return (ay == by and bx > ax) or (by < ay)


cdef inline double _hash01(i64 cu, i64 cv, u64 seed) nogil:
    cdef u64 h = (<u64> cu) * K1
    h = h ^ ((<u64> cv) * K2)
    h = h ^ (seed * K3)
    h = h ^ (h >> 33)
    h = h * M1
    h = h ^ (h >> 33)
    h = h * M2
    h = h ^ (h >> 33)
    return (<double> (h >> 11)) * INV_2_53


cdef inline u8 _to_u8(double c) nogil:
    cdef double v = floor(c * 255.0 + 0.5)
    if v < 0.0:
        v = 0.0
    if v > 255.0:
        v = 255.0
    return <u8> v


def fill(u8[:, :, ::1] rgb,
         double[:, ::1] depth,
         int[:, ::1] idmask,
         i64[:, ::1] tri_v,
         double[:, ::1] tri_iz,
         int[::1] tri_entity,
         int[::1] tri_mode,
         u8[:, ::1] tri_flat,
         double[:, :, ::1] tri_pal,
         double[::1] tri_scale,
         u64[::1] tri_seed,
         double[:, ::1] tri_uv,
         i64[:, ::1] tri_tex,
         u8[::1] atlas,
         double focal, double cx, double cy):
    """Rasterize triangles in order into rgb/depth/idmask (in place)."""
    cdef Py_ssize_t h = depth.shape[0]
    cdef Py_ssize_t w = depth.shape[1]
    cdef i64 hi_x = 16 * (w - 1) + 8
    cdef i64 hi_y = 16 * (h - 1) + 8
    cdef Py_ssize_t n = tri_v.shape[0]
    cdef Py_ssize_t t, px, py, k
    cdef i64 x0, y0, x1, y1, x2, y2, area, minx, maxx, miny, maxy
    cdef i64 px0, px1_, py0, py1_, sx, sy, w0, w1, w2, b0, b1, b2
    cdef i64 cu, cv, toff, tw, th, tx, ty, base
    cdef int mode, ent
    cdef double area_d, l0, l1, l2, iz0, iz1, iz2, iz, z, dxr, dyr, s, d
    cdef double u0, v0, u1, v1, u2, v2, u, v, scale, tt, c0, c1, c2, fu, fv
    cdef u64 seed

    for t in range(n):
        x0 = tri_v[t, 0]; y0 = tri_v[t, 1]
        x1 = tri_v[t, 2]; y1 = tri_v[t, 3]
        x2 = tri_v[t, 4]; y2 = tri_v[t, 5]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area <= 0:
            continue
        minx = x0
        if x1 < minx: minx = x1
        if x2 < minx: minx = x2
        maxx = x0
        if x1 > maxx: maxx = x1
        if x2 > maxx: maxx = x2
        miny = y0
        if y1 < miny: miny = y1
        if y2 < miny: miny = y2
        maxy = y0
        if y1 > maxy: maxy = y1
        if y2 > maxy: maxy = y2
        if maxx < 8 or minx > hi_x or maxy < 8 or miny > hi_y:
            continue
        px0 = ((minx if minx > 8 else 8) - 8 + 15) // 16
        px1_ = ((maxx if maxx < hi_x else hi_x) - 8) // 16
        py0 = ((miny if miny > 8 else 8) - 8 + 15) // 16
        py1_ = ((maxy if maxy < hi_y else hi_y) - 8) // 16
        if px1_ < px0 or py1_ < py0:
            continue
        b0 = 0 if _topleft(x1, y1, x2, y2) else -1
        b1 = 0 if _topleft(x2, y2, x0, y0) else -1
        b2 = 0 if _topleft(x0, y0, x1, y1) else -1
        area_d = <double> area
        iz0 = tri_iz[t, 0]; iz1 = tri_iz[t, 1]; iz2 = tri_iz[t, 2]
        mode = tri_mode[t]
        ent = tri_entity[t]
        u0 = tri_uv[t, 0]; v0 = tri_uv[t, 1]
        u1 = tri_uv[t, 2]; v1 = tri_uv[t, 3]
        u2 = tri_uv[t, 4]; v2 = tri_uv[t, 5]
        scale = tri_scale[t]
        seed = tri_seed[t]
        toff = tri_tex[t, 0]; tw = tri_tex[t, 1]; th = tri_tex[t, 2]

        for py in range(py0, py1_ + 1):
            sy = <i64> py * 16 + 8
            for px in range(px0, px1_ + 1):
                sx = <i64> px * 16 + 8
                w0 = (x2 - x1) * (sy - y1) - (y2 - y1) * (sx - x1)
                if w0 + b0 < 0:
                    continue
                w1 = (x0 - x2) * (sy - y2) - (y0 - y2) * (sx - x2)
                if w1 + b1 < 0:
                    continue
                w2 = (x1 - x0) * (sy - y0) - (y1 - y0) * (sx - x0)
                if w2 + b2 < 0:
                    continue
                l0 = (<double> w0) / area_d
                l1 = (<double> w1) / area_d
                l2 = (<double> w2) / area_d
                iz = l0 * iz0 + l1 * iz1 + l2 * iz2
                z = 1.0 / iz
                # range depth: planar z scaled along the pixel's ray
                dxr = ((<double> px + 0.5) - cx) / focal
                dyr = ((<double> py + 0.5) - cy) / focal
                s = sqrt(1.0 + dxr * dxr + dyr * dyr)
                d = z * s
                if d >= depth[py, px]:
                    continue
                if mode == MODE_FLAT:
                    rgb[py, px, 0] = tri_flat[t, 0]
                    rgb[py, px, 1] = tri_flat[t, 1]
                    rgb[py, px, 2] = tri_flat[t, 2]
                else:
                    u = l0 * u0 + l1 * u1 + l2 * u2
                    v = l0 * v0 + l1 * v1 + l2 * v2
                    if mode == MODE_CHECKER:
                        cu = <i64> floor(u * scale)
                        cv = <i64> floor(v * scale)
                        if (cu + cv) & 1:
                            c0 = tri_pal[t, 1, 0]; c1 = tri_pal[t, 1, 1]; c2 = tri_pal[t, 1, 2]
                        else:
                            c0 = tri_pal[t, 0, 0]; c1 = tri_pal[t, 0, 1]; c2 = tri_pal[t, 0, 2]
                    elif mode == MODE_NOISE:
                        cu = <i64> floor(u * scale)
                        cv = <i64> floor(v * scale)
                        tt = _hash01(cu, cv, seed)
                        c0 = tri_pal[t, 0, 0] + (tri_pal[t, 1, 0] - tri_pal[t, 0, 0]) * tt
                        c1 = tri_pal[t, 0, 1] + (tri_pal[t, 1, 1] - tri_pal[t, 0, 1]) * tt
                        c2 = tri_pal[t, 0, 2] + (tri_pal[t, 1, 2] - tri_pal[t, 0, 2]) * tt
                    else:
                        fu = u - floor(u)
                        fv = v - floor(v)
                        tx = <i64> (fu * (<double> tw))
                        if tx > tw - 1:
                            tx = tw - 1
                        ty = <i64> (fv * (<double> th))
                        if ty > th - 1:
                            ty = th - 1
                        base = toff + (ty * tw + tx) * 3
                        c0 = ((<double> atlas[base]) / 255.0) * tri_pal[t, 0, 0]
                        c1 = ((<double> atlas[base + 1]) / 255.0) * tri_pal[t, 0, 1]
                        c2 = ((<double> atlas[base + 2]) / 255.0) * tri_pal[t, 0, 2]
                    rgb[py, px, 0] = _to_u8(c0)
                    rgb[py, px, 1] = _to_u8(c1)
                    rgb[py, px, 2] = _to_u8(c2)
                depth[py, px] = d
                idmask[py, px] = ent
