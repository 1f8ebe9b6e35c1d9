"""Rendering, annotations, and image encoders."""

from .annotate import Annotation, annotate, annotation_for
from .camera import MAX_RESOLUTION, MIN_RESOLUTION, CameraSpec
from .encoders import (Encoder, make_encoder, encoder_names, register_encoder)
from .imageio import (read_depth_pgm, read_mask_pgm, read_ppm,
                      write_depth_pgm, write_mask_pgm, write_ppm)
from .meshes import Mesh, shape_mesh
from .render import Image, render
from .raster import active_backend

__all__ = [
    "Annotation", "annotate", "annotation_for",
    "CameraSpec", "MIN_RESOLUTION", "MAX_RESOLUTION",
    "Encoder", "make_encoder", "encoder_names", "register_encoder",
    "read_ppm", "write_ppm", "read_depth_pgm", "write_depth_pgm",
    "read_mask_pgm", "write_mask_pgm",
    "Mesh", "shape_mesh", "Image", "render", "active_backend",
]
