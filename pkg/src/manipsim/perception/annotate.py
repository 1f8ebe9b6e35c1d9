"""Pixel-exact annotations derived from a rendered frame's id mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .render import Image


@dataclass(frozen=True)
class Annotation:
    """Per-entity mask statistics for one frame.

    centroid is in pixel coordinates at pixel centers (+0.5 convention);
    bbox is (x_min, y_min, x_max, y_max) inclusive pixel indices;
    mean_depth averages the range depth over the entity's visible pixels.
    """

    entity_id: str
    pixel_count: int
    centroid: tuple[float, float]
    bbox: tuple[int, int, int, int]
    mean_depth: float


def annotate(image: Image) -> list[Annotation]:
    """Annotations for every entity visible in the frame, id_table order."""
    out = []
    mask = image.id_mask
    present = np.unique(mask)
    for idx in present:
        if idx == 0:
            continue
        ys, xs = np.nonzero(mask == idx)
        cx = float(xs.mean() + 0.5)
        cy = float(ys.mean() + 0.5)
        out.append(Annotation(
            entity_id=image.id_table[idx],
            pixel_count=int(xs.size),
            centroid=(cx, cy),
            bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
            mean_depth=float(image.depth[ys, xs].mean()),
        ))
    return out


def annotation_for(image: Image, entity_id: str):
    """Annotation for one entity, or None when it has no visible pixels."""
    try:
        idx = image.id_table.index(entity_id)
    except ValueError:
        return None
    ys, xs = np.nonzero(image.id_mask == idx)
    if xs.size == 0:
        return None
    return Annotation(
        entity_id=entity_id,
        pixel_count=int(xs.size),
        centroid=(float(xs.mean() + 0.5), float(ys.mean() + 0.5)),
        bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
        mean_depth=float(image.depth[ys, xs].mean()),
    )
