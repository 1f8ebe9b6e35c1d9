"""Perception dataset generation and validation.

generate_dataset renders randomized scenes to a fixed on-disk layout:

    out_dir/
      manifest.json
      images/NNNNNN_camK.ppm         postprocessed color frame
      masks/NNNNNN_camK.pgm          per-pixel entity-id mask
      annotations/NNNNNN_camK.json   id table + per-entity mask statistics

Sample NNNNNN uses episode index N of the environment, so every file's
bytes are a pure function of the configuration; regenerating in place (or
into a fresh directory) reproduces the dataset bitwise, and interrupted
runs resume by skipping indices whose files already exist.

validate_dataset sweeps a generated directory and cross-checks files
against the manifest, annotations against masks, and visible-mass
centroids against an independent pinhole-projection oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import EnvConfig, parse_config
from .env import Environment, make_env
from .errors import ConfigurationError
from .geometry import project_point
from .perception.annotate import annotate
from .perception.imageio import read_mask_pgm, write_mask_pgm, write_ppm
from .scene import ObjectRole

__all__ = ["generate_dataset", "validate_dataset", "DatasetReport"]

_SUBDIRS = ("images", "masks", "annotations")


def _stem(index: int, cam_index: int) -> str:
    return f"{index:06d}_cam{cam_index}"


def _sample_files(index: int, cam_index: int) -> Dict[str, str]:
    stem = _stem(index, cam_index)
    return {
        "image": f"images/{stem}.ppm",
        "mask": f"masks/{stem}.pgm",
        "annotation": f"annotations/{stem}.json",
    }


def _annotation_blob(index: int, camera_name: str, image) -> dict:
    anns = annotate(image)
    h, w = image.id_mask.shape
    return {
        "sample": index,
        "camera": camera_name,
        "resolution": [w, h],
        "id_table": list(image.id_table),
        "annotations": [
            {
                "entity_id": a.entity_id,
                "pixel_count": a.pixel_count,
                "centroid": [a.centroid[0], a.centroid[1]],
                "bbox": list(a.bbox),
                "mean_depth": a.mean_depth,
            }
            for a in anns
        ],
    }


def _dump_json(path: Path, blob: dict) -> None:
    path.write_text(json.dumps(blob, indent=1, sort_keys=True) + "\n",
                    encoding="utf-8")


def generate_dataset(config, n_images: int, out_dir,
                     seed: Optional[int] = None) -> dict:
    """Render n_images randomized samples into out_dir; returns the manifest.

    seed overrides the configuration seed.  Sample i is episode i, so the
    output is reproducible per sample regardless of how many samples were
    rendered before it — that is what makes interrupted runs resumable:
    indices whose image, mask, and annotation files all exist already are
    skipped without rendering.
    """
    if n_images <= 0:
        raise ConfigurationError(f"n_images must be positive, got {n_images}")
    if isinstance(config, EnvConfig):
        raw = dict(config.raw)
    elif isinstance(config, (str, Path)):
        raw = json.loads(Path(config).read_text(encoding="utf-8"))
    else:
        raw = dict(config)
    if seed is not None:
        raw["seed"] = seed
    cfg = parse_config(raw)
    if not cfg.cameras:
        raise ConfigurationError("dataset generation needs at least one camera")

    out = Path(out_dir)
    for sub in _SUBDIRS:
        (out / sub).mkdir(parents=True, exist_ok=True)

    env = make_env(cfg)
    cam_names = [c.name for c in cfg.cameras]
    samples = []
    for i in range(n_images):
        per_cam = {name: _sample_files(i, k) for k, name in enumerate(cam_names)}
        done = all((out / rel).exists()
                   for files in per_cam.values() for rel in files.values())
        if not done:
            env.reset(i)
            frames = env.render_images()
            for k, name in enumerate(cam_names):
                img = frames[name]
                files = per_cam[name]
                write_ppm(out / files["image"], img.rgb)
                write_mask_pgm(out / files["mask"], img.id_mask)
                _dump_json(out / files["annotation"],
                           _annotation_blob(i, name, img))
        samples.append({"index": i, "episode": i, "files": per_cam})

    manifest = {
        "config": raw,
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "n_images": n_images,
        "cameras": cam_names,
        "samples": samples,
    }
    _dump_json(out / "manifest.json", manifest)
    return manifest


# -------------------------------------------------------------- validation


# Unoccluded centroids must sit within this many pixels of the projected
# object center; the visible-mass centroid of a convex solid deviates from
# the center projection only by perspective asymmetry, which stays small
# at these fields of view.
CENTROID_TOLERANCE_PX = 2.0


@dataclass
class DatasetReport:
    samples: int = 0
    files_checked: int = 0
    annotations_checked: int = 0
    centroids_checked: int = 0
    max_centroid_error: float = 0.0
    problems: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def to_json(self) -> str:
        blob = {
            "ok": self.ok,
            "samples": self.samples,
            "files_checked": self.files_checked,
            "annotations_checked": self.annotations_checked,
            "centroids_checked": self.centroids_checked,
            "max_centroid_error": self.max_centroid_error,
            "problems": self.problems,
        }
        return json.dumps(blob, indent=1, sort_keys=True) + "\n"


def _bboxes_disjoint(a: Sequence[int], b: Sequence[int]) -> bool:
    return a[2] < b[0] or b[2] < a[0] or a[3] < b[1] or b[3] < a[1]


def _centroid_checkable(ann: dict, others: List[dict], w: int, h: int) -> bool:
    """True when nothing can have occluded or clipped the entity's mask:
    its bbox touches no image border and intersects no other entity's
    bbox.  Occlusion removes mask pixels only where the occluder's own
    pixels (hence its bbox) meet the victim's region."""
    x0, y0, x1, y1 = ann["bbox"]
    if x0 <= 0 or y0 <= 0 or x1 >= w - 1 or y1 >= h - 1:
        return False
    return all(_bboxes_disjoint(ann["bbox"], o["bbox"])
               for o in others if o is not ann)


def validate_dataset(out_dir) -> DatasetReport:
    """Sweep a generated dataset directory and cross-check everything.

    Checks per sample and camera: all three files exist; every non-zero
    mask id resolves through the id table to exactly one annotation and
    vice versa; pixel counts, bboxes, and centroids recompute identically
    from the mask; centroids lie inside the image; and for every free
    object whose silhouette cannot have been occluded or clipped, the
    centroid lies within CENTROID_TOLERANCE_PX of the projected object
    center recomputed from the configuration.
    """
    out = Path(out_dir)
    report = DatasetReport()
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        report.problems.append("manifest.json is missing")
        return report
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    env: Optional[Environment] = None
    try:
        env = make_env(manifest["config"])
    except (ConfigurationError, KeyError) as exc:
        report.problems.append(f"manifest config does not parse: {exc}")

    for sample in manifest.get("samples", ()):
        index = sample["index"]
        report.samples += 1
        scene_objects: Dict[str, object] = {}
        cam_by_name = {}
        if env is not None:
            env.reset(sample.get("episode", index))
            scene_objects = {o.id: o for o in env.scene.objects
                             if o.role is ObjectRole.FREE}
            cam_by_name = {c.name: c for c in env.cameras}
        for cam_name, files in sample["files"].items():
            missing = [rel for rel in files.values() if not (out / rel).exists()]
            if missing:
                report.problems.append(
                    f"sample {index} camera {cam_name}: missing {missing}")
                continue
            report.files_checked += len(files)
            mask = read_mask_pgm(out / files["mask"])
            blob = json.loads((out / files["annotation"]).read_text(encoding="utf-8"))
            w, h = blob["resolution"]
            if mask.shape != (h, w):
                report.problems.append(
                    f"sample {index} camera {cam_name}: mask shape "
                    f"{mask.shape} != annotation resolution {(h, w)}")
                continue
            id_table = blob["id_table"]
            anns = blob["annotations"]
            by_entity = {a["entity_id"]: a for a in anns}
            present = [int(v) for v in np.unique(mask) if v != 0]
            for idx in present:
                if not 0 < idx < len(id_table):
                    report.problems.append(
                        f"sample {index} camera {cam_name}: mask id {idx} "
                        f"outside id table")
                elif id_table[idx] not in by_entity:
                    report.problems.append(
                        f"sample {index} camera {cam_name}: mask id {idx} "
                        f"({id_table[idx]}) has no annotation")
            for ann in anns:
                report.annotations_checked += 1
                eid = ann["entity_id"]
                if eid not in id_table:
                    report.problems.append(
                        f"sample {index} camera {cam_name}: annotation "
                        f"{eid!r} not in id table")
                    continue
                idx = id_table.index(eid)
                ys, xs = np.nonzero(mask == idx)
                if xs.size != ann["pixel_count"]:
                    report.problems.append(
                        f"sample {index} camera {cam_name}: {eid} pixel_count "
                        f"{ann['pixel_count']} != mask count {xs.size}")
                    continue
                cx, cy = ann["centroid"]
                if not (0.0 <= cx <= w and 0.0 <= cy <= h):
                    report.problems.append(
                        f"sample {index} camera {cam_name}: {eid} centroid "
                        f"({cx}, {cy}) outside image bounds")
                mcx, mcy = float(xs.mean() + 0.5), float(ys.mean() + 0.5)
                if math.hypot(mcx - cx, mcy - cy) > 1e-9:
                    report.problems.append(
                        f"sample {index} camera {cam_name}: {eid} centroid "
                        f"does not recompute from mask")
                bbox = [int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())]
                if bbox != list(ann["bbox"]):
                    report.problems.append(
                        f"sample {index} camera {cam_name}: {eid} bbox "
                        f"{ann['bbox']} != mask bbox {bbox}")

                obj = scene_objects.get(eid)
                cam = cam_by_name.get(cam_name)
                if obj is None or cam is None:
                    continue
                if not _centroid_checkable(ann, anns, w, h):
                    continue
                uv = project_point(cam.pose(), cam.fov_y, cam.resolution,
                                   obj.pose.position)
                if uv is None:
                    report.problems.append(
                        f"sample {index} camera {cam_name}: {eid} visible "
                        f"but projects behind the camera")
                    continue
                err = math.hypot(uv[0] - cx, uv[1] - cy)
                report.centroids_checked += 1
                report.max_centroid_error = max(report.max_centroid_error, err)
                if err > CENTROID_TOLERANCE_PX:
                    report.problems.append(
                        f"sample {index} camera {cam_name}: {eid} centroid "
                        f"({cx:.2f}, {cy:.2f}) is {err:.2f}px from projected "
                        f"center ({uv[0]:.2f}, {uv[1]:.2f})")
    return report
