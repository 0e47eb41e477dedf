"""Ground-truth preparation: canonical rings resampled to the unified vertex
count, with corner labels, normalized coordinates and derived boxes."""

from __future__ import annotations

import numpy as np

from .. import geometry
from ..geometry import CapacityError
from .cocoio import CocoDataset


def preprocess_gt(ds: CocoDataset, m: int) -> list:
    """One target dict per image (in ds.images order) with keys:

    image_id, boxes (K, 4) normalized cxcywh, polygons (K, M, 2) normalized,
    vertex_labels (K, M) int, classes (K,) int (0 outer, 1 inner).

    Raises CapacityError listing every instance whose corner count exceeds m.
    """
    offenders = [(a.image_id, a.id, len(a.polygon)) for a in ds.annotations
                 if len(a.polygon) > m]
    if offenders:
        listing = ", ".join(f"image {i} annotation {a} ({c} corners)" for i, a, c in offenders)
        raise CapacityError(f"m={m} too small for: {listing}")

    by_image = {}
    for a in ds.annotations:
        by_image.setdefault(a.image_id, []).append(a)

    targets = []
    for rec in ds.images:
        h, w = rec["height"], rec["width"]
        anns = by_image.get(rec["id"], [])
        boxes = np.zeros((len(anns), 4))
        polys = np.zeros((len(anns), m, 2))
        labels = np.zeros((len(anns), m), dtype=np.int64)
        classes = np.zeros(len(anns), dtype=np.int64)
        for k, a in enumerate(anns):
            resampled = geometry.resample_uniform(a.polygon, m)
            polys[k] = resampled.verts / np.array([w, h])
            labels[k] = resampled.labels
            lo = resampled.verts.min(axis=0) / np.array([w, h])
            hi = resampled.verts.max(axis=0) / np.array([w, h])
            boxes[k] = [(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2,
                        max(hi[0] - lo[0], 1e-3), max(hi[1] - lo[1], 1e-3)]
            classes[k] = a.category_id - 1
        targets.append({"image_id": rec["id"], "boxes": boxes, "polygons": polys,
                        "vertex_labels": labels, "classes": classes})
    return targets
