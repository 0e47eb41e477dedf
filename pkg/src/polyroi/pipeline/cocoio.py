"""COCO-format ground-truth and results JSON, plus dataset directory I/O.

Outer rings are category 1 ("building"), interior outlines category 2
("inner"); every ring is an independent annotation record.  All writes are
atomic (temp file then rename) and key-sorted so reruns are byte-identical.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import geometry
from ..geometry import Polygon
from ..metrics.cocoeval import Detection, GroundTruthInstance
from .synth import SceneAnnotation

CATEGORIES = [{"id": 1, "name": "building"}, {"id": 2, "name": "inner"}]
CATEGORY_BY_TAG = {"outer": 1, "inner": 2}
TAG_BY_CATEGORY = {1: "outer", 2: "inner"}


class CocoFormatError(ValueError):
    """Schema violation, annotated with the JSON path of the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class AnnotationRecord:
    id: int
    image_id: int
    category_id: int
    polygon: Polygon


@dataclass
class CocoDataset:
    images: list = field(default_factory=list)        # {id, width, height, file_name}
    annotations: list = field(default_factory=list)   # AnnotationRecord
    categories: list = field(default_factory=lambda: [dict(c) for c in CATEGORIES])

    def size_map(self) -> dict:
        return {img["id"]: (img["height"], img["width"]) for img in self.images}

    def ground_truths(self) -> list:
        return [GroundTruthInstance(polygon=a.polygon, image_id=a.image_id,
                                    category_id=a.category_id) for a in self.annotations]


def write_json_atomic(obj, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def scenes_to_dataset(scenes: list) -> CocoDataset:
    ds = CocoDataset()
    ann_id = 1
    for scene in scenes:
        h, w = scene.image.shape[:2]
        ds.images.append({"id": scene.image_id, "width": w, "height": h,
                          "file_name": f"{scene.image_id:06d}.png"})
        for inst in scene.instances:
            ds.annotations.append(AnnotationRecord(
                id=ann_id, image_id=scene.image_id,
                category_id=CATEGORY_BY_TAG[inst.class_tag], polygon=inst.outer))
            ann_id += 1
    return ds


def dataset_to_coco_dict(ds: CocoDataset) -> dict:
    anns = []
    for a in ds.annotations:
        v = a.polygon.verts
        x0, y0 = v.min(axis=0)
        x1, y1 = v.max(axis=0)
        anns.append({
            "id": a.id, "image_id": a.image_id, "category_id": a.category_id,
            "segmentation": [geometry.ring_to_flat(a.polygon)],
            "area": abs(geometry.shoelace_area(a.polygon)),
            "bbox": [float(x0), float(y0), float(x1 - x0), float(y1 - y0)],
            "iscrowd": 0,
        })
    return {"images": ds.images, "annotations": anns, "categories": ds.categories}


def coco_write(ds: CocoDataset, path) -> None:
    write_json_atomic(dataset_to_coco_dict(ds), path)


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise CocoFormatError(f"{path}.{key}", "missing required field")
    return obj[key]


def coco_read(path) -> CocoDataset:
    with open(path) as fh:
        try:
            blob = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CocoFormatError(str(path), f"not valid JSON ({exc})") from exc
    ds = CocoDataset(images=[], annotations=[], categories=blob.get("categories", list(CATEGORIES)))
    for i, img in enumerate(_require(blob, "images", "$")):
        for key in ("id", "width", "height"):
            _require(img, key, f"$.images[{i}]")
        ds.images.append({"id": img["id"], "width": img["width"], "height": img["height"],
                          "file_name": img.get("file_name", f"{img['id']:06d}.png")})
    for i, ann in enumerate(_require(blob, "annotations", "$")):
        where = f"$.annotations[{i}]"
        seg = _require(ann, "segmentation", where)
        if not isinstance(seg, list) or not seg or not isinstance(seg[0], list):
            raise CocoFormatError(f"{where}.segmentation", "expected [[x1, y1, ...]]")
        try:
            poly = geometry.ring_from_flat(seg[0])
        except ValueError as exc:
            raise CocoFormatError(f"{where}.segmentation", str(exc)) from exc
        ds.annotations.append(AnnotationRecord(
            id=_require(ann, "id", where), image_id=_require(ann, "image_id", where),
            category_id=_require(ann, "category_id", where), polygon=poly))
    return ds


def results_write(detections: list, path) -> None:
    """COCO results array: image id, category, score, polygon coordinate list."""
    rows = [{
        "image_id": d.image_id,
        "category_id": d.category_id,
        "segmentation": [geometry.ring_to_flat(d.polygon)],
        "score": float(d.score),
    } for d in detections]
    write_json_atomic(rows, path)


def results_read(path) -> list:
    with open(path) as fh:
        try:
            rows = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CocoFormatError(str(path), f"not valid JSON ({exc})") from exc
    if not isinstance(rows, list):
        raise CocoFormatError("$", "results file must be a JSON array")
    out = []
    for i, row in enumerate(rows):
        where = f"$[{i}]"
        seg = _require(row, "segmentation", where)
        if not isinstance(seg, list) or not seg or not isinstance(seg[0], list):
            raise CocoFormatError(f"{where}.segmentation", "expected [[x1, y1, ...]]")
        try:
            poly = geometry.ring_from_flat(seg[0])
        except ValueError as exc:
            raise CocoFormatError(f"{where}.segmentation", str(exc)) from exc
        out.append(Detection(polygon=poly, score=float(_require(row, "score", where)),
                             image_id=_require(row, "image_id", where),
                             category_id=_require(row, "category_id", where)))
    return out


def save_dataset(scenes: list, out_dir) -> None:
    """Write a dataset directory: images/*.png plus annotations.json."""
    from PIL import Image

    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    ds = scenes_to_dataset(scenes)
    for scene, img_rec in zip(scenes, ds.images):
        Image.fromarray(scene.image).save(out_dir / "images" / img_rec["file_name"])
    coco_write(ds, out_dir / "annotations.json")


def load_dataset(root) -> tuple:
    """Read a dataset directory back as (images keyed by id, CocoDataset)."""
    from PIL import Image

    root = Path(root)
    ds = coco_read(root / "annotations.json")
    images = {}
    for rec in ds.images:
        arr = np.asarray(Image.open(root / "images" / rec["file_name"]).convert("RGB"))
        images[rec["id"]] = arr
    return images, ds
