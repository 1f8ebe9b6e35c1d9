"""Minimal binary PPM/PGM image IO for dataset files.

RGB frames go to P6 PPM (maxval 255). Depth goes to P5 PGM with maxval
65535, millimeter quantization, inf clamped to the max code. Id masks go to
P5 PGM maxval 255 alongside a JSON id table written by the dataset layer.
"""

from __future__ import annotations

import numpy as np

DEPTH_MM_MAX = 65535


def write_ppm(path, rgb: np.ndarray) -> None:
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("write_ppm expects an HxWx3 uint8 array")
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb).tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, w, h, maxval, off = _parse_header(data)
    if magic != b"P6" or maxval != 255:
        raise ValueError(f"{path}: expected binary P6 maxval 255")
    pix = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=off)
    return pix.reshape(h, w, 3).copy()


def write_depth_pgm(path, depth: np.ndarray) -> None:
    """Quantize range depth to millimeters into a 16-bit P5 PGM."""
    if depth.ndim != 2:
        raise ValueError("write_depth_pgm expects an HxW array")
    mm = np.where(np.isfinite(depth), depth * 1000.0, float(DEPTH_MM_MAX))
    mm = np.clip(np.rint(mm), 0, DEPTH_MM_MAX).astype(">u2")
    h, w = depth.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{DEPTH_MM_MAX}\n".encode("ascii"))
        fh.write(mm.tobytes())


def read_depth_pgm(path) -> np.ndarray:
    """Depth in meters; pixels at the max code come back as +inf."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, w, h, maxval, off = _parse_header(data)
    if magic != b"P5" or maxval != DEPTH_MM_MAX:
        raise ValueError(f"{path}: expected binary P5 maxval {DEPTH_MM_MAX}")
    mm = np.frombuffer(data, dtype=">u2", count=w * h, offset=off).reshape(h, w)
    out = mm.astype(np.float64) / 1000.0
    out[mm == DEPTH_MM_MAX] = np.inf
    return out


def write_mask_pgm(path, mask: np.ndarray) -> None:
    if mask.ndim != 2:
        raise ValueError("write_mask_pgm expects an HxW array")
    if mask.max(initial=0) > 255 or mask.min(initial=0) < 0:
        raise ValueError("id mask does not fit 8-bit PGM")
    h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(mask.astype(np.uint8).tobytes())


def read_mask_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, w, h, maxval, off = _parse_header(data)
    if magic != b"P5" or maxval != 255:
        raise ValueError(f"{path}: expected binary P5 maxval 255")
    pix = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=off)
    return pix.reshape(h, w).astype(np.int32)


def _parse_header(data: bytes):
    """Parse PNM magic + 3 decimal fields, tolerating comment lines."""
    pos = 0
    fields = []
    magic = None
    while len(fields) < 3:
        while pos < len(data) and data[pos: pos + 1].isspace():
            pos += 1
        if data[pos: pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos: pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if magic is None:
            magic = token
        else:
            fields.append(int(token))
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = fields
    return magic, w, h, maxval, pos
