"""Dataset generation layout, reproducibility, and the sweep validator."""

import json
from pathlib import Path

import pytest

from manipsim.dataset import generate_dataset, validate_dataset
from manipsim.errors import ConfigurationError


def _config(cameras=None):
    return {
        "workspace": "table",
        "robot": {"arm": "kuka_iiwa", "gripper": "magnetic",
                  "base_position": [-0.45, 0.0, 0.0]},
        "objects": [{"pool": ["cube_0.05", "sphere_0.05"], "count": 1,
                     "choice": "random_subset",
                     "placement": {"kind": "area", "min": [-0.1, -0.25],
                                   "max": [0.2, 0.25]}}],
        "cameras": cameras if cameras is not None else [
            {"name": "main", "position": [0.85, 0.0, 0.75],
             "look_at": [0.0, 0.0, 0.1], "fov_y": 1.0,
             "resolution": [96, 96]}],
        "task": {"type": "reach", "target": "ee", "goal": [0.2, -0.2, 0.35],
                 "success_threshold": 0.05},
        "reward": {"source": "ground_truth", "metric": {"kind": "euclidean"},
                   "shaping": "dense_delta"},
        "randomization": {"light": {"schedule": "on_reset"},
                          "color": {"schedule": "on_reset"},
                          "postprocess": {"schedule": "on_reset"}},
        "observation_mode": "ground_truth",
        "seed": 21,
        "max_steps": 10,
    }


def _tree_bytes(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_layout_and_manifest(tmp_path):
    manifest = generate_dataset(_config(), 3, tmp_path / "ds")
    assert manifest["n_images"] == 3
    assert manifest["cameras"] == ["main"]
    assert len(manifest["samples"]) == 3
    for i in range(3):
        stem = f"{i:06d}_cam0"
        assert (tmp_path / "ds" / "images" / f"{stem}.ppm").exists()
        assert (tmp_path / "ds" / "masks" / f"{stem}.pgm").exists()
        assert (tmp_path / "ds" / "annotations" / f"{stem}.json").exists()
    on_disk = json.loads((tmp_path / "ds" / "manifest.json").read_text())
    assert on_disk == manifest
    assert on_disk["samples"][2]["episode"] == 2


def test_regeneration_is_bitwise_identical(tmp_path):
    generate_dataset(_config(), 3, tmp_path / "a")
    generate_dataset(_config(), 3, tmp_path / "b")
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")


def test_resume_skips_existing_and_matches(tmp_path):
    generate_dataset(_config(), 4, tmp_path / "ds")
    want = _tree_bytes(tmp_path / "ds")
    (tmp_path / "ds" / "images" / "000001_cam0.ppm").unlink()
    (tmp_path / "ds" / "annotations" / "000003_cam0.json").unlink()
    generate_dataset(_config(), 4, tmp_path / "ds")
    assert _tree_bytes(tmp_path / "ds") == want


def test_validator_passes_clean_dataset(tmp_path):
    generate_dataset(_config(), 4, tmp_path / "ds")
    report = validate_dataset(tmp_path / "ds")
    assert report.ok, report.problems
    assert report.samples == 4
    assert report.annotations_checked > 0
    assert report.max_centroid_error <= 2.0
    blob = json.loads(report.to_json())
    assert blob["ok"] is True


def test_validator_flags_missing_file(tmp_path):
    generate_dataset(_config(), 2, tmp_path / "ds")
    (tmp_path / "ds" / "masks" / "000000_cam0.pgm").unlink()
    report = validate_dataset(tmp_path / "ds")
    assert not report.ok
    assert any("missing" in p for p in report.problems)


def test_validator_flags_corrupted_annotation(tmp_path):
    generate_dataset(_config(), 2, tmp_path / "ds")
    p = tmp_path / "ds" / "annotations" / "000001_cam0.json"
    blob = json.loads(p.read_text())
    blob["annotations"][0]["pixel_count"] += 5
    p.write_text(json.dumps(blob))
    report = validate_dataset(tmp_path / "ds")
    assert not report.ok
    assert any("pixel_count" in msg for msg in report.problems)


def test_validator_flags_absent_manifest(tmp_path):
    report = validate_dataset(tmp_path)
    assert not report.ok


def test_generate_argument_validation(tmp_path):
    with pytest.raises(ConfigurationError):
        generate_dataset(_config(), 0, tmp_path / "x")
    with pytest.raises(ConfigurationError):
        generate_dataset(_config(cameras=[]), 2, tmp_path / "y")


def test_seed_override_changes_pixels(tmp_path):
    generate_dataset(_config(), 1, tmp_path / "a")
    generate_dataset(_config(), 1, tmp_path / "b", seed=99)
    img_a = (tmp_path / "a" / "images" / "000000_cam0.ppm").read_bytes()
    img_b = (tmp_path / "b" / "images" / "000000_cam0.ppm").read_bytes()
    assert img_a != img_b
    man_b = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert man_b["seed"] == 99
