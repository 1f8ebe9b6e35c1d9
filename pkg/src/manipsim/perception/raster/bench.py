"""Benchmark the raster backends against each other.

Run as: python -m manipsim.perception.raster.bench [--size 256] [--tris 400]
[--frames 30]. Generates a deterministic synthetic triangle batch, times
both backends on identical inputs, and verifies the outputs match bitwise.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import compiled_available, fill_with
from .fill_py import MODE_CHECKER, MODE_FLAT, MODE_IMAGE, MODE_NOISE


def make_batch(size: int, tris: int, seed: int = 7):
    rng = np.random.default_rng(seed)
    n = tris
    # fixed-point corners spread over the frame, sorted to mix windings
    pix = rng.uniform(-0.2 * size, 1.2 * size, size=(n, 3, 2))
    tri_v = np.floor(pix * 16.0 + 0.5).astype(np.int64).reshape(n, 6)
    z = rng.uniform(0.5, 4.0, size=(n, 3))
    tri_iz = 1.0 / z
    tri_entity = rng.integers(1, 12, size=n).astype(np.int32)
    tri_mode = rng.integers(0, 4, size=n).astype(np.int32)
    tri_flat = rng.integers(0, 256, size=(n, 3)).astype(np.uint8)
    tri_pal = rng.uniform(0.0, 1.0, size=(n, 2, 3))
    tri_scale = rng.uniform(2.0, 9.0, size=n)
    tri_seed = rng.integers(0, 2**63, size=n).astype(np.uint64)
    tri_uv = rng.uniform(0.0, 1.0, size=(n, 6))
    tw, th = 16, 16
    atlas = rng.integers(0, 256, size=tw * th * 3).astype(np.uint8)
    tri_tex = np.zeros((n, 3), dtype=np.int64)
    tri_tex[:, 1] = tw
    tri_tex[:, 2] = th
    focal = (size / 2.0) / np.tan(np.pi / 6.0)
    return (tri_v, tri_iz, tri_entity, tri_mode, tri_flat, tri_pal,
            tri_scale, tri_seed, tri_uv, tri_tex, atlas,
            focal, size / 2.0, size / 2.0)


def blank(size: int):
    rgb = np.zeros((size, size, 3), dtype=np.uint8)
    depth = np.full((size, size), np.inf, dtype=np.float64)
    idmask = np.zeros((size, size), dtype=np.int32)
    return rgb, depth, idmask


def run(backend: str, size: int, batch, frames: int) -> tuple[float, tuple]:
    # warm once outside the timed loop
    rgb, depth, idmask = blank(size)
    fill_with(backend, rgb, depth, idmask, *batch)
    out = (rgb, depth, idmask)
    t0 = time.perf_counter()
    for _ in range(frames):
        rgb, depth, idmask = blank(size)
        fill_with(backend, rgb, depth, idmask, *batch)
    dt = time.perf_counter() - t0
    return dt / frames, out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--tris", type=int, default=400)
    ap.add_argument("--frames", type=int, default=30)
    args = ap.parse_args(argv)

    batch = make_batch(args.size, args.tris)
    py_ms, py_out = run("python", args.size, batch, args.frames)
    print(f"python   backend: {py_ms * 1e3:8.2f} ms/frame "
          f"({args.tris} tris, {args.size}x{args.size})")
    if not compiled_available():
        print("compiled backend: not built")
        return 0
    cy_ms, cy_out = run("compiled", args.size, batch, args.frames)
    print(f"compiled backend: {cy_ms * 1e3:8.2f} ms/frame "
          f"({args.tris} tris, {args.size}x{args.size})")
    print(f"speedup: {py_ms / cy_ms:.1f}x")
    same = all(np.array_equal(a, b) for a, b in zip(py_out, cy_out))
    print("bitwise parity:", "ok" if same else "MISMATCH")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
