"""Triangle rasterizer with a compiled core and a pure-python fallback.

The compiled extension is preferred when importable. Set
MANIPSIM_RASTER_BACKEND=python or =compiled to force one; forcing the
compiled backend when it is unavailable raises at import time so a parity
regression cannot silently fall back.
"""

from __future__ import annotations

import os

from . import fill_py
from .fill_py import MODE_CHECKER, MODE_FLAT, MODE_IMAGE, MODE_NOISE

try:
    from . import _fill_cy
except ImportError:
    _fill_cy = None

_FORCED = os.environ.get("MANIPSIM_RASTER_BACKEND", "").strip().lower()
if _FORCED == "python":
    _impl, _name = fill_py.fill, "python"
elif _FORCED == "compiled":
    if _fill_cy is None:
        raise ImportError(
            "MANIPSIM_RASTER_BACKEND=compiled but the extension is not built")
    _impl, _name = _fill_cy.fill, "compiled"
elif _FORCED:
    raise ImportError(
        f"unknown MANIPSIM_RASTER_BACKEND {_FORCED!r}, "
        "expected 'python' or 'compiled'")
elif _fill_cy is not None:
    _impl, _name = _fill_cy.fill, "compiled"
else:
    _impl, _name = fill_py.fill, "python"


def active_backend() -> str:
    """'compiled' or 'python', decided once at import."""
    return _name


def compiled_available() -> bool:
    return _fill_cy is not None


def fill(*args):
    """Rasterize a triangle batch; see fill_py.fill for the layout."""
    _impl(*args)


def fill_with(backend: str, *args):
    """Run a specific backend regardless of the active one (parity tests)."""
    if backend == "python":
        fill_py.fill(*args)
    elif backend == "compiled":
        if _fill_cy is None:
            raise RuntimeError("compiled raster backend is not built")
        _fill_cy.fill(*args)
    else:
        raise ValueError(f"unknown raster backend {backend!r}")


__all__ = [
    "MODE_FLAT", "MODE_CHECKER", "MODE_NOISE", "MODE_IMAGE",
    "active_backend", "compiled_available", "fill", "fill_with",
]
